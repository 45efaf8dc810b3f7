//! WIRE-FORMAT.md embeds the output of the `wire_dump` example verbatim.

#[path = "../examples/wire_dump.rs"]
mod wire_dump;

#[test]
fn wire_format_examples_are_current() {
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../WIRE-FORMAT.md")).expect("doc present");
    let generated = wire_dump::render();
    assert!(
        doc.contains(generated.trim()),
        "WIRE-FORMAT.md is stale; regenerate with `cargo run -p ebake-core --example wire_dump`"
    );
}
