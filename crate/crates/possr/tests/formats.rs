use nalgebra::DMatrix;
use possr::formats::*;
use possr::scenario::{DeltapSpec, Scenario, Truth};
use possr_core::imaging::{add_noise, forward};
use possr_core::{AtomicMeasure, Window};

#[test]
fn measure_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    let x = AtomicMeasure::from_triples(&[(0.4, 0.3, 1.0), (0.1 + 0.2, 0.7, 1.0 / 3.0)]).unwrap();
    write_measure(&path, &x).unwrap();
    assert_eq!(read_measure(&path).unwrap(), x);

    let parsed: MeasureFile = serde_json::from_str(r#"{"atoms": [{"t": 0.4, "s": 0.3, "w": 1.0}]}"#).unwrap();
    assert_eq!(parsed.atoms, vec![AtomFile { t: 0.4, s: 0.3, w: 1.0 }]);
    assert!(serde_json::from_str::<MeasureFile>(r#"{"atoms": [{"t": 0.4, "s": 0.3}]}"#).is_err());
    let neg: MeasureFile = serde_json::from_str(r#"{"atoms": [{"t": 0.4, "s": 0.3, "w": -1}]}"#).unwrap();
    assert!(neg.to_measure().is_err());
}

#[test]
fn window_specs() {
    let g: WindowSpec =
        serde_json::from_str(r#"{"kind":"gaussian","sigma":0.2,"centers":[0.0,0.25,0.5,0.75,1.0]}"#).unwrap();
    assert_eq!(g.build().unwrap(), Window::gaussian_uniform(0.2, 5).unwrap());
    assert_eq!(g.size(), Some(5));
    let u: WindowSpec = serde_json::from_str(r#"{"kind":"gaussian","sigma":0.2,"m":5}"#).unwrap();
    assert_eq!(u.build().unwrap(), g.build().unwrap());
    let mono: WindowSpec = serde_json::from_str(r#"{"kind":"monomial","m":3}"#).unwrap();
    assert_eq!(mono.build().unwrap(), Window::monomial(3).unwrap());
    let tab: WindowSpec =
        serde_json::from_str(r#"{"kind":"tabulated","nodes":[0,1],"values":[[1,1],[0,1]]}"#).unwrap();
    assert!(tab.build().is_ok());
    assert!(tab.with_len(3).is_err());

    let both: WindowSpec = serde_json::from_str(r#"{"kind":"gaussian","sigma":0.2,"m":4,"centers":[0,1]}"#).unwrap();
    assert!(both.build().is_err());
    assert!(serde_json::from_str::<WindowSpec>(r#"{"kind":"cauchy","sigma":0.2}"#).is_err());
    assert_eq!(WindowSpec::from(&g.build().unwrap()).build().unwrap(), g.build().unwrap());
}

#[test]
fn observation_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("y.csv");
    let w = Window::gaussian_uniform(0.2, 4).unwrap();
    let x = AtomicMeasure::from_triples(&[(0.37, 0.61, 1.3)]).unwrap();
    let obs = add_noise(&forward(&w, &x), 0.05, 9).unwrap();
    write_observation(&path, &obs).unwrap();
    assert!(dir.path().join("y.json").exists());
    let back = read_observation(&path).unwrap();
    assert_eq!(back, obs);

    std::fs::remove_file(dir.path().join("y.json")).unwrap();
    assert_eq!(read_observation(&path).unwrap().delta, 0.0);

    std::fs::write(&path, "1,2\n3\n").unwrap();
    assert!(read_observation(&path).is_err());
    std::fs::write(&path, "1,2,3\n4,5,6\n").unwrap();
    assert!(read_observation(&path).is_err());
}

#[test]
fn matrix_csv_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let a = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) * 1e-7);
    write_matrix_csv(&path, &a).unwrap();
    assert_eq!(read_matrix_csv(&path).unwrap(), a);
}

#[test]
fn scenario_defaults_and_validation() {
    let sc: Scenario = serde_json::from_str(
        r#"{"window":{"kind":"gaussian","sigma":0.2,"m":5},
            "truth":{"generate":{"k":2,"sep_floor":0.1,"weight_range":[0.5,2.0],"seed":3}}}"#,
    )
    .unwrap();
    assert_eq!(sc.grid_n, 256);
    assert_eq!(sc.deltap, DeltapSpec::Additive);
    assert_eq!(sc.delta, 0.0);
    assert!(matches!(sc.truth, Truth::Generate { .. }));

    let explicit: Scenario = serde_json::from_str(
        r#"{"window":{"kind":"monomial","m":3},"truth":{"atoms":[{"t":0.5,"s":0.5,"w":1}]},
            "deltap":{"rule":"explicit","value":0.01},"ground_norm":"linf"}"#,
    )
    .unwrap();
    assert_eq!(explicit.deltap, DeltapSpec::Explicit { value: 0.01 });
    assert_eq!(explicit.ground_norm, NormName::Linf);

    assert!(serde_json::from_str::<Scenario>(r#"{"window":{"kind":"monomial","m":3},"truth":{"atoms":[]},"typo":1}"#).is_err());
    assert!(serde_json::from_str::<Scenario>(r#"{"window":{"kind":"monomial","m":3},"truth":{"atomz":[]}}"#).is_err());

    let round: Scenario = serde_json::from_str(&to_json_string(&sc)).unwrap();
    assert_eq!(round, sc);
}
