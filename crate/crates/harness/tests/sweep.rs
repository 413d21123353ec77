use dmbsim::config::ScenarioConfig;
use dmbsim::sweep::{expand, parse_axis, SweepKey};

#[test]
fn axis_forms() {
    assert_eq!(parse_axis("b=8,16,32").unwrap().values, vec![8.0, 16.0, 32.0]);
    assert_eq!(parse_axis("seed=2..5").unwrap().values, vec![2.0, 3.0, 4.0]);
    assert_eq!(parse_axis("t=0.5:2:0.5").unwrap().values, vec![0.5, 1.0, 1.5, 2.0]);
    assert_eq!(parse_axis("M=4").unwrap().key, SweepKey::Rate);
    for bad in ["b", "q=1", "b=1.5", "t=1:0:0", "seed=a..b", "m=0.5..2"] {
        assert!(parse_axis(bad).is_err(), "{bad}");
    }
}

#[test]
fn grid_is_a_cartesian_product_in_axis_order() {
    let axes = [parse_axis("seed=0..2").unwrap(), parse_axis("rho=0.2,0.3").unwrap()];
    let points = expand(&ScenarioConfig::default(), &axes);
    let labels: Vec<&str> = points.iter().map(|(l, _, _)| l.as_str()).collect();
    assert_eq!(
        labels,
        ["seed=0_rho=0.2", "seed=0_rho=0.3", "seed=1_rho=0.2", "seed=1_rho=0.3"]
    );
    assert_eq!(points[3].2.seed, 1);
    assert_eq!(points[3].2.rho, Some(0.3));
    assert_eq!(points[3].2.batch, None);
}
