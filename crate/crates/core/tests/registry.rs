use rand::SeedableRng;

use ebake_core::ebake::registry::{RegistryFile, SCHEMA_VERSION};
use ebake_core::ebake::{Device, ProtocolConfig, SecureElement, TrustedAuthority};
use ebake_core::{DeviceId, SeededRng};

fn id(s: &str) -> DeviceId {
    DeviceId::from_label(s).unwrap()
}

#[test]
fn saved_registry_restores_the_ta() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.json");
    let cfg = ProtocolConfig::default();
    let mut rng = SeededRng::seed_from_u64(5);
    let mut ta = TrustedAuthority::initialize(cfg, &mut rng).unwrap();
    let ca = ta.register_device(id("a"), &mut rng).unwrap();
    ta.register_device(id("b"), &mut rng).unwrap();
    ta.rotate_kdta(&mut rng).unwrap();
    RegistryFile::from_ta(&ta).save(&path).unwrap();

    let restored = RegistryFile::load(&path).unwrap().into_ta(cfg).unwrap();
    assert_eq!(restored.current_generation(), ta.current_generation());
    assert_eq!(restored.records().count(), 2);
    assert_eq!(restored.public_key(&id("a")), ta.public_key(&id("a")));
    assert_eq!(restored.current_kdta(), ta.current_kdta());

    // A device provisioned before the restart still verifies at the new TA.
    let mut restored = restored;
    let mut d = Device::new(SecureElement::load(ca).unwrap(), cfg);
    let q_b = restored.public_key(&id("b")).unwrap();
    let now = 1_000_000;
    let (c, env) = d.start(id("b"), &q_b, now, &mut rng).unwrap();
    // Both devices predate the rotation, so the older K_dta still opens W.
    restored.handle_msg1(&env.sender, c, &env.message().unwrap(), now).unwrap();
}

#[test]
fn save_replaces_atomically_and_leaves_no_temp_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.json");
    let mut rng = SeededRng::seed_from_u64(6);
    let mut ta = TrustedAuthority::initialize(ProtocolConfig::default(), &mut rng).unwrap();
    RegistryFile::from_ta(&ta).save(&path).unwrap();
    ta.register_device(id("c"), &mut rng).unwrap();
    RegistryFile::from_ta(&ta).save(&path).unwrap();
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 1, "{names:?}");
    assert_eq!(RegistryFile::load(&path).unwrap().devices.len(), 1);
}

#[test]
fn rejects_unknown_schema_and_curve() {
    let mut rng = SeededRng::seed_from_u64(7);
    let ta = TrustedAuthority::initialize(ProtocolConfig::default(), &mut rng).unwrap();
    let mut f = RegistryFile::from_ta(&ta);
    f.schema_version = SCHEMA_VERSION + 1;
    assert!(f.clone().into_ta(ProtocolConfig::default()).is_err());
    f.schema_version = SCHEMA_VERSION;
    f.curve = "secp192r1".into();
    assert!(f.into_ta(ProtocolConfig::default()).is_err());
}
