mod common;

use common::exdata;
use cvxnn::formats::{load_model, read_json, save_model, write_json, PatternSetFile, SolutionFile};
use cvxnn::io::{make_autoregressive, read_data, read_labels, write_csv};
use cvxnn::solver::{build_problem, SolveOptions};
use cvxnn::arrangements::enumerate_exact;
use cvxnn::{DataMatrix, Labels, TwoLayerNet, WeightNorm};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn net_strategy() -> impl Strategy<Value = (TwoLayerNet, Vec<Vec<f64>>)> {
    (1usize..=3, 1usize..=5, any::<bool>()).prop_flat_map(|(d, m, biased)| {
        (
            prop::collection::vec(-2.0f64..2.0, d * m),
            prop::collection::vec(-2.0f64..2.0, m),
            prop::collection::vec(-2.0f64..2.0, m),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 1..8),
        )
            .prop_map(move |(w, b, a, xs)| {
                let net = TwoLayerNet::new(
                    DMatrix::from_vec(d, m, w),
                    biased.then(|| DVector::from_vec(b)),
                    DVector::from_vec(a),
                )
                .unwrap();
                (net, xs)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn balancing_preserves_function_and_lowers_penalty((net, xs) in net_strategy()) {
        let x = DataMatrix::from_samples(&xs).unwrap();
        let bal = net.balance_rescale();
        let before = net.predict(&x).unwrap();
        let after = bal.predict(&x).unwrap();
        for (a, b) in before.as_slice().iter().zip(after.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
        prop_assert!(bal.weight_penalty(WeightNorm::L2) <= net.weight_penalty(WeightNorm::L2) * (1.0 + 1e-12));
        for j in 0..bal.width() {
            let w = bal.weights().column(j).norm();
            prop_assert!((w - bal.alpha()[j].abs()).abs() <= 1e-12 * (1.0 + w));
        }
    }

    #[test]
    fn model_files_round_trip((net, _) in net_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &net).unwrap();
        prop_assert_eq!(load_model(&path).unwrap(), net);
    }
}

#[test]
fn csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let xp = dir.path().join("x.csv");
    let yp = dir.path().join("y.csv");
    write_csv(&xp, Some(&["a", "b"]), &exdata().to_samples()).unwrap();
    write_csv(&yp, None, &[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    assert_eq!(read_data(&xp).unwrap(), exdata());
    assert_eq!(read_labels(&yp, None).unwrap(), Labels::new(vec![1.0, 2.0, 3.0]).unwrap());
}

#[test]
fn pattern_and_solution_documents() {
    let dir = tempfile::tempdir().unwrap();
    let x = exdata();
    let pats = enumerate_exact(&x).unwrap().patterns;
    let path = dir.path().join("p.json");
    write_json(&path, &PatternSetFile::from_set(&pats)).unwrap();
    let back: PatternSetFile = read_json(&path).unwrap();
    assert_eq!(back.to_set().unwrap(), pats);

    let y = Labels::new(vec![1.0, 2.0, 0.0]).unwrap();
    let p = build_problem(&x, &y, 0.1, &pats).unwrap();
    let sol = p.solve(&SolveOptions::default()).unwrap();
    let file = SolutionFile::from_solution(&sol, &pats);
    assert_eq!(file.groups.len(), (0..sol.group_count()).filter(|&g| sol.u[g].norm() + sol.v[g].norm() > 0.0).count());
}

#[test]
fn autoregressive_rows_follow_the_series() {
    let s: Vec<f64> = (0..50).map(|t| (t as f64 * 0.3).sin()).collect();
    let sp = make_autoregressive(&s, 3, 0.8).unwrap();
    assert_eq!(sp.x_train.n() + sp.x_test.n(), 47);
    for i in 0..sp.x_test.n() {
        let t = 3 + sp.x_train.n() + i;
        assert_eq!(sp.y_test.as_slice()[i], s[t]);
        assert_eq!(sp.x_test.sample(i).as_slice(), &[s[t - 1], s[t - 2], s[t - 3]]);
    }
}
