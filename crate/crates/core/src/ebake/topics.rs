//! MQTT topic names.

pub const TA_INBOX: &str = "ebake/ta/inbox";
pub const DEVICE_INBOX_FILTER: &str = "ebake/dev/+/inbox";
pub const SESSION_PREFIX: &str = "ebake/session/";
/// Client label the TA publishes under.
pub const TA_CLIENT: &str = "ebake/ta";

/// Inbox of a device, keyed by its routing alias (not its identity).
pub fn device_inbox(route: &[u8; 8]) -> String {
    format!("ebake/dev/{}/inbox", hex::encode(route))
}

pub fn session_topic(random: &[u8; 16]) -> String {
    format!("{SESSION_PREFIX}{}", hex::encode(random))
}
