mod common;

use rand::Rng;
use shelfcat::boosted::{fit_gbt, fit_tree, presort, GbtConfig, Node};

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Best gain over every feature and every cut between distinct values.
fn exhaustive_best(x: &shelfcat::Matrix, grad: &[f64], hess: &[f64], cfg: &GbtConfig) -> f64 {
    let (gt, ht): (f64, f64) = (grad.iter().sum(), hess.iter().sum());
    let mut best = 0.0f64;
    for f in 0..x.cols() {
        let mut values: Vec<f64> = (0..x.rows()).map(|i| x.get(i, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for cut in values.windows(2) {
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..x.rows() {
                if x.get(i, f) <= cut[0] {
                    gl += grad[i];
                    hl += hess[i];
                }
            }
            let (gr, hr) = (gt - gl, ht - hl);
            if hl < cfg.min_child_weight || hr < cfg.min_child_weight {
                continue;
            }
            let gain = 0.5 * (score(gl, hl, cfg.lambda) + score(gr, hr, cfg.lambda) - score(gt, ht, cfg.lambda)) - cfg.gamma;
            best = best.max(gain);
        }
    }
    best
}

#[test]
fn stump_finds_the_best_split() {
    let mut rng = common::rng(11);
    for trial in 0..40 {
        let x = if trial % 2 == 0 {
            common::normal_matrix(&mut rng, 60, 4)
        } else {
            let data = (0..240).map(|_| rng.random_range(0..4) as f64).collect();
            shelfcat::Matrix::from_vec(60, 4, data).unwrap()
        };
        let grad: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hess: Vec<f64> = (0..60).map(|_| rng.random_range(0.05..0.25)).collect();
        let cfg = GbtConfig { max_depth: 1, lambda: 0.5, gamma: 0.01, ..GbtConfig::default() };
        let tree = fit_tree(&x, &presort(&x), &grad, &hess, &cfg);
        let want = exhaustive_best(&x, &grad, &hess, &cfg);
        match tree.nodes()[0] {
            Node::Leaf { .. } => assert_eq!(want, 0.0, "trial {trial}: missed a split worth {want}"),
            Node::Split { feature, threshold, left, right } => {
                let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..60 {
                    if x.get(i, feature) <= threshold {
                        gl += grad[i];
                        hl += hess[i];
                    } else {
                        gr += grad[i];
                        hr += hess[i];
                    }
                }
                let gain = 0.5 * (score(gl, hl, 0.5) + score(gr, hr, 0.5) - score(gl + gr, hl + hr, 0.5)) - 0.01;
                assert!((gain - want).abs() < 1e-9, "trial {trial}: gain {gain} vs best {want}");
                for (node, g, h) in [(left, gl, hl), (right, gr, hr)] {
                    match tree.nodes()[node] {
                        Node::Leaf { weight } => assert!((weight + g / (h + 0.5)).abs() < 1e-12),
                        _ => panic!("depth-1 tree has an inner child"),
                    }
                }
            }
        }
    }
}

#[test]
fn probabilities_and_single_class() {
    let mut rng = common::rng(12);
    let x = common::normal_matrix(&mut rng, 100, 3);
    let y: Vec<usize> = (0..100).map(|i| usize::from(x.get(i, 0) > 0.0) + usize::from(x.get(i, 1) > 0.5)).collect();
    let model = fit_gbt(&x, &y, 4, &GbtConfig { rounds: 15, ..GbtConfig::default() }).unwrap();
    for row in x.iter_rows() {
        let p = model.predict_proba(row).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
        // class 3 never occurs in training
        assert!(p[3] < 1e-6);
    }
    let correct = x.iter_rows().zip(&y).filter(|(r, &t)| model.predict(r).unwrap().first() == Some(t)).count();
    assert!(correct >= 90, "{correct}/100 on training data");

    let constant = fit_gbt(&x, &vec![2; 100], 4, &GbtConfig::default()).unwrap();
    assert_eq!(constant.constant_class(), Some(2));
    assert_eq!(constant.predict(x.row(0)).unwrap().first(), Some(2));
}
