use std::io::BufRead;
use std::path::{Path, PathBuf};

use ebake_core::adversary::{self, Outcome};
use ebake_core::bench::{self, formula};
use ebake_core::codec::MsgType;
use ebake_core::ebake::registry::{write_atomic, RegistryFile};
use ebake_core::ebake::{fingerprint, Device, DeviceCredentials, SecureElement, TaEvent, TrustedAuthority};
use ebake_core::network::{DasNetwork, EbakeNetwork, HandshakeStatus, NetEvent, SessionRecord};
use ebake_core::transport::PassThrough;
use ebake_core::{DeviceId, SeededRng};
use rand::SeedableRng;

use crate::config::Config;
use crate::{CliError, OutputArg, SchemeArg};

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn parse_id(label: &str) -> Result<DeviceId, CliError> {
    DeviceId::from_label(label).ok_or_else(|| usage(format!("bad device id {label:?}: use up to 16 bytes or 32 hex digits")))
}

/// Human form of an id: its label when it is zero-padded printable text.
fn label_of(id: &DeviceId) -> String {
    let end = id.0.iter().position(|b| *b == 0).unwrap_or(16);
    let (text, pad) = id.0.split_at(end);
    if end > 0 && pad.iter().all(|b| *b == 0) && text.iter().all(|b| b.is_ascii_graphic()) {
        String::from_utf8_lossy(text).into_owned()
    } else {
        id.to_hex()
    }
}

fn creds_path(cfg: &Config, id: &DeviceId) -> PathBuf {
    cfg.credentials_dir.join(format!("{}.json", label_of(id)))
}

fn load_ta(cfg: &Config) -> Result<TrustedAuthority, CliError> {
    if !cfg.registry.exists() {
        return Err(usage(format!(
            "registry {} not found; run `ebake ta init` first",
            cfg.registry.display()
        )));
    }
    RegistryFile::load(&cfg.registry)
        .and_then(|f| f.into_ta(cfg.protocol()))
        .map_err(usage)
}

fn save_ta(cfg: &Config, ta: &TrustedAuthority) -> Result<(), CliError> {
    RegistryFile::from_ta(ta).save(&cfg.registry).map_err(usage)
}

fn write_credentials(path: &Path, creds: &DeviceCredentials) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    }
    let json = serde_json::to_vec_pretty(creds).map_err(usage)?;
    write_atomic(path, &json).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn read_credentials(path: &Path) -> Result<DeviceCredentials, CliError> {
    let raw = std::fs::read(path).map_err(|e| usage(format!("credentials {}: {e}", path.display())))?;
    serde_json::from_slice(&raw).map_err(|e| usage(format!("credentials {}: {e}", path.display())))
}

/// A label, or a path to a credential file.
fn resolve_credentials(cfg: &Config, arg: &str) -> Result<DeviceCredentials, CliError> {
    let p = Path::new(arg);
    if p.is_file() {
        return read_credentials(p);
    }
    read_credentials(&creds_path(cfg, &parse_id(arg)?))
}

fn device_from(cfg: &Config, creds: DeviceCredentials) -> Result<Device, CliError> {
    Ok(Device::new(SecureElement::load(creds).map_err(usage)?, cfg.protocol()))
}

pub fn ta_init(cfg: &Config, force: bool) -> Result<(), CliError> {
    if cfg.registry.exists() && !force {
        return Err(usage(format!(
            "registry {} already exists (use --force to replace it)",
            cfg.registry.display()
        )));
    }
    let mut rng = SeededRng::seed_from_u64(cfg.seed());
    let ta = TrustedAuthority::initialize(cfg.protocol(), &mut rng).map_err(usage)?;
    save_ta(cfg, &ta)?;
    println!("initialized registry {} (K_dta generation {})", cfg.registry.display(), ta.current_generation());
    Ok(())
}

pub fn ta_register(cfg: &Config, label: &str) -> Result<(), CliError> {
    let id = parse_id(label)?;
    let mut ta = load_ta(cfg)?;
    if ta.record(&id).is_some() {
        return Err(usage(format!("identity exists: {label}")));
    }
    let mut rng = SeededRng::seed_from_u64(cfg.seed() ^ u64::from_le_bytes(id.0[..8].try_into().expect("8 bytes")));
    let creds = ta.register_device(id, &mut rng).map_err(usage)?;
    let path = creds_path(cfg, &id);
    write_credentials(&path, &creds)?;
    save_ta(cfg, &ta)?;
    println!("registered {label} ({id}); credentials written to {}", path.display());
    println!("note: credential files stand in for a secure element and are not tamper-resistant");
    Ok(())
}

pub fn ta_rotate(cfg: &Config) -> Result<(), CliError> {
    let mut ta = load_ta(cfg)?;
    let mut rng = SeededRng::seed_from_u64(cfg.seed());
    let g = ta.rotate_kdta(&mut rng).map_err(usage)?;
    save_ta(cfg, &ta)?;
    println!("K_dta generation {g} active; re-register devices to move them onto it");
    Ok(())
}

fn failure(s: &SessionRecord) -> Option<String> {
    match s.status() {
        HandshakeStatus::Established if s.keys_match() => None,
        HandshakeStatus::Established => Some("keys differ between initiator and responder".into()),
        HandshakeStatus::Failed { entity, error } => Some(format!("handshake failed at {error} (reported by {entity})")),
        HandshakeStatus::TimedOut => Some("handshake timed out".into()),
        HandshakeStatus::InProgress => Some("handshake did not complete".into()),
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn print_ebake(net: &EbakeNetwork<PassThrough>, s: &SessionRecord, from_event: usize) {
    let (x, y) = (label_of(&s.initiator), label_of(&s.responder));
    println!("scheme      ebake");
    println!("initiator   {x}");
    println!("responder   {y}");
    if let Some(k) = &s.initiator_key {
        println!("topic       {}", k.topic);
        println!("{x} SK fingerprint {}", k.fingerprint());
    }
    if let Some(k) = &s.responder_key {
        println!("{y} SK fingerprint {}", k.fingerprint());
    }
    for e in &net.events()[from_event..] {
        let at = |t: u64| t - s.started_at;
        let (who, what) = match e {
            NetEvent::Ta { at: t, event } => (
                (at(*t), "TA".to_owned()),
                match event {
                    TaEvent::Forwarded { .. } => "verified M1, forwarded M2".to_owned(),
                    TaEvent::Completed { .. } => "verified M3, sent M4 and topic notice".to_owned(),
                    TaEvent::Rejected { error, .. } => format!("rejected: {error}"),
                    TaEvent::Ignored => "ignored undecodable input".to_owned(),
                },
            ),
            NetEvent::Device { at: t, id, outcome } => (
                (at(*t), label_of(id)),
                match outcome {
                    Ok(MsgType::M3) => "verified M2, replied M3".to_owned(),
                    Ok(MsgType::M4) => "verified M4, key established".to_owned(),
                    Ok(MsgType::TopicNotice) => "joined session topic, key established".to_owned(),
                    Ok(m) => format!("handled {m:?}"),
                    Err(e) => format!("rejected: {e}"),
                },
            ),
        };
        println!("  +{:>3} ms  {:<10} {what}", who.0, who.1);
    }
    let t = &s.timings;
    println!(
        "compute (ms): initiator {:.3}  TA {:.3}  responder {:.3}  total {:.3}",
        ms(t.initiator),
        ms(t.ta),
        ms(t.responder),
        ms(s.compute)
    );
    let c = &s.counters;
    println!(
        "counters: initiator {} | TA {} | responder {} | total {}",
        formula(&c.initiator),
        formula(&c.ta),
        formula(&c.responder),
        formula(&c.total())
    );
    let o = c.total();
    println!("          sym={} asym={} hash={} xor={}", o.sym, o.asym, o.hash, o.xor);
    if let Some(r) = s.rtt_ms() {
        println!("rtt         {r} ms (simulated)");
    }
}

fn ebake_network(cfg: &Config, devices: Vec<DeviceCredentials>) -> Result<EbakeNetwork, CliError> {
    let mode = cfg.delivery()?;
    let ta = load_ta(cfg)?;
    let mut net = EbakeNetwork::from_ta(ta, mode, cfg.seed(), PassThrough);
    for creds in devices {
        if net.ta().record(&creds.id).is_none() {
            return Err(usage(format!("{} is not in the registry", label_of(&creds.id))));
        }
        net.attach(device_from(cfg, creds)?);
    }
    Ok(net)
}

fn run_pair(cfg: &Config, net: &mut EbakeNetwork, x: DeviceId, y: DeviceId) -> Result<(), CliError> {
    let from = net.events().len();
    let s = net.handshake(x, y);
    print_ebake(net, &s, from);
    if let Some(rtt) = s.rtt_ms() {
        if rtt > cfg.handshake_timeout_ms {
            return Err(CliError::Protocol(format!("handshake exceeded {} ms", cfg.handshake_timeout_ms)));
        }
    }
    match failure(&s) {
        None => Ok(()),
        Some(m) => Err(CliError::Protocol(m)),
    }
}

pub fn handshake(cfg: &Config, initiator: &str, responder: &str, scheme: SchemeArg) -> Result<(), CliError> {
    match scheme {
        SchemeArg::Ebake => {
            let cx = resolve_credentials(cfg, initiator)?;
            let y = parse_id(responder)?;
            let cy = read_credentials(&creds_path(cfg, &y))?;
            let x = cx.id;
            let mut net = ebake_network(cfg, vec![cx, cy])?;
            run_pair(cfg, &mut net, x, y)
        }
        SchemeArg::Das => {
            let x = match Path::new(initiator).is_file() {
                true => read_credentials(Path::new(initiator))?.id,
                false => parse_id(initiator)?,
            };
            let y = parse_id(responder)?;
            let mut net = DasNetwork::new(cfg.delta_ms, cfg.delivery()?, cfg.seed());
            net.add_device(x).map_err(usage)?;
            net.add_device(y).map_err(usage)?;
            let s = net.handshake(x, y).map_err(usage)?;
            println!("scheme      das");
            println!("initiator   {}", label_of(&x));
            println!("responder   {}", label_of(&y));
            if let Some(k) = &s.initiator_key {
                println!("{} SK fingerprint {}", label_of(&x), fingerprint(k));
            }
            if let Some(k) = &s.responder_key {
                println!("{} SK fingerprint {}", label_of(&y), fingerprint(k));
            }
            println!("compute (ms): total {:.3}", ms(s.compute));
            let c = &s.counters;
            println!(
                "counters: initiator {} | responder {} | total {}",
                formula(&c.initiator),
                formula(&c.responder),
                formula(&c.total())
            );
            if let Some((who, e)) = s.errors.first() {
                return Err(CliError::Protocol(format!("{} rejected: {e}", label_of(who))));
            }
            if !s.keys_match() {
                return Err(CliError::Protocol("handshake did not complete".into()));
            }
            Ok(())
        }
    }
}

pub fn ta_serve(cfg: &Config, pairs: Vec<(String, String)>) -> Result<(), CliError> {
    let pairs = if pairs.is_empty() {
        let mut out = Vec::new();
        for line in std::io::stdin().lock().lines() {
            let line = line.map_err(|e| CliError::Transport(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            out.push(crate::parse_pair(line).map_err(usage)?);
        }
        out
    } else {
        pairs
    };
    let mut ids = Vec::new();
    let mut creds = Vec::new();
    for (a, b) in &pairs {
        for l in [a, b] {
            let id = parse_id(l)?;
            if !ids.contains(&id) {
                ids.push(id);
                creds.push(read_credentials(&creds_path(cfg, &id))?);
            }
        }
    }
    let mut net = ebake_network(cfg, creds)?;
    println!("TA serving {} device(s) on {}", ids.len(), ebake_core::ebake::topics::TA_INBOX);
    let mut failed = 0;
    for (a, b) in &pairs {
        if let Err(e) = run_pair(cfg, &mut net, parse_id(a)?, parse_id(b)?) {
            eprintln!("error: {a} -> {b}: {e}");
            failed += 1;
        }
    }
    println!("{} handshake(s), {failed} failed", pairs.len());
    if failed > 0 {
        return Err(CliError::Protocol(format!("{failed} handshake(s) failed")));
    }
    Ok(())
}

pub fn attack(cfg: &Config, name: &str, scheme: SchemeArg, report: Option<&Path>) -> Result<(), CliError> {
    let seed = cfg.seed.unwrap_or(1);
    let r = adversary::run(name, scheme.into(), seed).map_err(usage)?;
    let json = serde_json::to_string_pretty(&r).map_err(usage)?;
    match report {
        Some(p) => {
            write_atomic(p, json.as_bytes()).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            for s in &r.steps {
                println!("  {s}");
            }
            let o = match r.outcome {
                Outcome::Success => "success",
                Outcome::Failure => "failure",
            };
            println!("{} vs {}: attack {o} (seed {seed}); report {}", r.attack, r.scheme, p.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

pub fn bench(cfg: &Config, scheme: SchemeArg, output: OutputArg, iterations: usize, handshakes: usize) -> Result<(), CliError> {
    let r = bench::run(scheme.into(), iterations, handshakes, cfg.seed.unwrap_or(1));
    match output {
        OutputArg::Table => print!("{}", r.to_markdown()),
        OutputArg::Json => println!("{}", serde_json::to_string_pretty(&r).map_err(usage)?),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip() {
        let id = DeviceId::from_label("sensor-7").unwrap();
        assert_eq!(label_of(&id), "sensor-7");
        let raw = DeviceId([0xff; 16]);
        assert_eq!(label_of(&raw), "f".repeat(32));
    }
}
