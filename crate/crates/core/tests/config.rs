use decoy_bb84::params::SystemParams;

#[test]
fn shipped_config_matches_defaults() {
    let text = include_str!("../../../config/default.conf");
    let p = SystemParams::from_config_str(text).unwrap();
    assert_eq!(p, SystemParams::default());
    for key in SystemParams::keys() {
        assert!(text.lines().any(|l| l.split('=').next().unwrap().trim() == *key), "{key} missing");
    }
}
