use cellrobust::ca::{classical_ca, robust_ca, ContingencyTable, KChoice, RobustPcaOptions};
use cellrobust::estimate::{two_step_cov, EmOptions};
use cellrobust::io::{parse_csv, to_csv};
use cellrobust::regress::plugin_regression;
use cellrobust::{detect, sim, DataMatrix, Detector};

#[test]
fn csv_round_trip_then_two_step_regression() {
    let mut rng = sim::rng(42);
    let (values, truth) = sim::contaminated_toeplitz(&mut rng, 300, 4, 0.05, 8.0);
    let x = DataMatrix::new(values).unwrap();
    let back = parse_csv(&to_csv(&x, false), "memory").unwrap();
    assert_eq!(back.values(), x.values());

    let flags = detect::run(&back, &Detector::default()).unwrap();
    let hits = flags.flags.iter().zip(truth.iter()).filter(|(f, t)| **f && **t).count();
    assert!(hits as f64 >= 0.9 * truth.iter().filter(|&&t| t).count() as f64);

    let model = two_step_cov(&back, &Detector::default(), &EmOptions::default()).unwrap();
    let fit = plugin_regression(&model, 3, true).unwrap();
    // clean covariance is Toeplitz in -0.9; x4 is best predicted by x3
    assert!(fit.beta[2] < -0.5, "{:?}", fit.beta);
}

#[test]
fn labelled_table_keeps_names_through_both_ca_variants() {
    let mut text = String::from(",a,b,c,d\n");
    let mut rng = sim::rng(5);
    for i in 0..25 {
        let row: Vec<String> = (0..4)
            .map(|j| format!("{}", 200 + 20 * ((i * (j + 1)) % 7) + (10.0 * sim::standard_normal(&mut rng)).round() as i64))
            .collect();
        text.push_str(&format!("row{i},{}\n", row.join(",")));
    }
    let x = parse_csv(&text, "memory").unwrap();
    let t = ContingencyTable::from_data(&x).unwrap();
    let c = classical_ca(&t, KChoice::Fixed(2)).unwrap();
    let r = robust_ca(
        &t,
        &RobustPcaOptions {
            k: KChoice::Fixed(2),
            ..Default::default()
        },
    )
    .unwrap();
    for sol in [&c, &r] {
        assert_eq!(sol.row_names[3], "row3");
        assert_eq!(sol.col_names, ["a", "b", "c", "d"]);
    }
    assert!(c.flags.is_none() && r.flags.is_some());
}
