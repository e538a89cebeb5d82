use surgbench_policies::toy::{bimodal_experiment, BimodalConfig};

#[test]
fn diffusion_keeps_both_modes() {
    let r = bimodal_experiment(&BimodalConfig::default()).unwrap();
    eprintln!("{r:?}");
    assert!(r.near_minus >= 0.2 && r.near_plus >= 0.2, "{r:?}");
    assert!(r.seconds < 300.0, "{r:?}");
}
