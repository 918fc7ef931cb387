use dmlfair::simlab::{
    counterfactual_copy, generate, read_latent_csv, write_latent_csv, RatingForm, SimConfig,
};
use dmlfair::tabular::{infer_schema, load_csv, write_csv, InferOptions};

fn cfg(n: usize, seed: u64) -> SimConfig {
    SimConfig { n, seed, ..SimConfig::default() }
}

#[test]
fn regeneration_is_deterministic() {
    let (a, la) = generate(&cfg(500, 3)).unwrap();
    let (b, lb) = generate(&cfg(500, 3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_ne!(generate(&cfg(500, 4)).unwrap().0, a);
}

#[test]
fn counterfactual_round_trip_is_exact() {
    let (data, lat) = generate(&cfg(1000, 5)).unwrap();
    for (g, r) in [("male", "white"), ("female", "black"), ("nonbinary", "asian")] {
        let there = lat.manipulated(g, r).unwrap();
        let back = there.with_sensitive(&lat.genders(), &lat.races()).unwrap();
        assert_eq!(back.to_dataset().unwrap(), data);
        assert_eq!(counterfactual_copy(&lat, g, r).unwrap(), there.to_dataset().unwrap());
    }
}

#[test]
fn male_share_and_ability_mean() {
    let (data, lat) = generate(&cfg(7000, 77)).unwrap();
    let male = data.level_counts("gender").unwrap()["male"] as f64 / 7000.0;
    assert!((male - 0.7).abs() <= 3.0 * (0.7f64 * 0.3 / 7000.0).sqrt());
    let ability = lat.records.iter().map(|r| r.ability).sum::<f64>() / 7000.0;
    assert!((ability - 88.0).abs() <= 3.0 * 4.0 / 7000f64.sqrt());
}

#[test]
fn csv_outputs_reload() {
    let c = cfg(200, 6);
    let (data, lat) = generate(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let dp = dir.path().join("data.csv");
    let lp = dir.path().join("latent.csv");
    write_csv(&data, &dp).unwrap();
    write_latent_csv(&lat, &lp).unwrap();
    assert_eq!(load_csv(&dp, &c.schema()).unwrap(), data);
    let back = read_latent_csv(&lp, &c).unwrap();
    assert_eq!(back, lat);
    assert_eq!(back.to_dataset().unwrap(), data);

    // Inference recovers the same schema when every level appears.
    let big = cfg(7000, 1);
    let (d2, _) = generate(&big).unwrap();
    let p2 = dir.path().join("big.csv");
    write_csv(&d2, &p2).unwrap();
    let opts = InferOptions {
        sensitive: vec!["age".into(), "gender".into(), "race".into()],
        outcome: "rating".into(),
        ..InferOptions::default()
    };
    if d2.level_counts("race").unwrap().len() == 8 {
        assert_eq!(infer_schema(&p2, &opts).unwrap(), big.schema());
    }
}

#[test]
fn scaled_sum_reading_differs() {
    let (a, _) = generate(&cfg(50, 2)).unwrap();
    let (b, _) = generate(&SimConfig { rating_form: RatingForm::ScaledSum, ..cfg(50, 2) }).unwrap();
    assert_eq!(a.numeric("grade").unwrap(), b.numeric("grade").unwrap());
    assert_ne!(a.numeric("rating").unwrap(), b.numeric("rating").unwrap());
}

#[test]
fn config_round_trips_through_json() {
    let c = cfg(10, 1);
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<SimConfig>(&text).unwrap(), c);
}
