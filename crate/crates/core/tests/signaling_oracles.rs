use emcom::prob::{LogProbVector, RandomSource};
use emcom::signaling::{
    finite_difference_gradients, gradients, message_marginal, mutual_information, objective_elbo,
    objective_mi, optimal_receiver, optimize, random_game, Objective, SourceDist, TabularReceiver,
    TabularSender,
};

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn joint(s: &TabularSender, src: &SourceDist) -> Vec<Vec<f64>> {
    let p = src.dist.probs();
    s.logits
        .iter()
        .enumerate()
        .map(|(x, row)| softmax(row).iter().map(|v| p[x] * v).collect())
        .collect()
}

/// `Σ_x Σ_m p(x) S(m|x) log R(x|m)` written out directly.
fn brute_mi_objective(s: &TabularSender, r: &TabularReceiver, src: &SourceDist) -> f64 {
    let j = joint(s, src);
    let recon: Vec<Vec<f64>> = r.recon_logits.iter().map(|row| softmax(row)).collect();
    let mut total = 0.0;
    for (x, row) in j.iter().enumerate() {
        for (m, w) in row.iter().enumerate() {
            total += w * recon[m][x].ln();
        }
    }
    total
}

/// `Σ p(x,m) log (p(x,m) / (p(x) p(m)))`.
fn brute_mi(s: &TabularSender, src: &SourceDist) -> f64 {
    let j = joint(s, src);
    let px: Vec<f64> = j.iter().map(|r| r.iter().sum()).collect();
    let pm: Vec<f64> = (0..j[0].len()).map(|m| j.iter().map(|r| r[m]).sum()).collect();
    let mut mi = 0.0;
    for (x, row) in j.iter().enumerate() {
        for (m, w) in row.iter().enumerate() {
            if *w > 0.0 {
                mi += w * (w / (px[x] * pm[m])).ln();
            }
        }
    }
    mi
}

#[test]
fn objectives_match_brute_force() {
    let mut rng = RandomSource::new(11).stream(&[]);
    for _ in 0..20 {
        let (s, r, src) = random_game(&mut rng, 3, 2, 2.0).unwrap();
        let a = objective_mi(&s, &r, &src).unwrap();
        assert!((a - brute_mi_objective(&s, &r, &src)).abs() < 1e-12);
        let b = mutual_information(&s, &src).unwrap();
        assert!((b - brute_mi(&s, &src)).abs() < 1e-12);
    }
}

#[test]
fn mi_bound_and_its_equality_case() {
    let mut rng = RandomSource::new(12).stream(&[]);
    for i in 0..100 {
        let (s, r, src) = random_game(&mut rng, 2 + i % 4, 2 + i % 3, 3.0).unwrap();
        let hx = src.dist.entropy();
        let mi = mutual_information(&s, &src).unwrap();
        let j = objective_mi(&s, &r, &src).unwrap();
        assert!(j + hx <= mi + 1e-12);
        let best = optimal_receiver(&s, &src).unwrap();
        let j = objective_mi(&s, &best, &src).unwrap();
        assert!((j + hx - mi).abs() < 1e-9);
    }
}

#[test]
fn elbo_regroupings_agree() {
    let mut rng = RandomSource::new(13).stream(&[]);
    for _ in 0..50 {
        let (s, r, src) = random_game(&mut rng, 4, 3, 2.0).unwrap();
        for beta in [0.0, 0.5, 1.0, 2.0] {
            let rep = objective_elbo(&s, &r, &src, beta).unwrap();
            assert!((rep.total - rep.regrouped_total()).abs() < 1e-12);
        }
    }
}

#[test]
fn optimal_prior_is_the_sender_marginal() {
    let mut rng = RandomSource::new(14).stream(&[]);
    for _ in 0..10 {
        let (s, r, src) = random_game(&mut rng, 3, 3, 1.5).unwrap();
        let closed = objective_elbo(&s, &optimal_receiver(&s, &src).unwrap(), &src, 1.0)
            .unwrap()
            .total;
        // gradient ascent on the receiver alone
        let mut r = r;
        for _ in 0..4000 {
            let g = gradients(&s, &r, &src, Objective::Elbo { beta: 1.0 }).unwrap();
            for (row, gr) in r.recon_logits.iter_mut().zip(&g.recon) {
                for (v, d) in row.iter_mut().zip(gr) {
                    *v += 2.0 * d;
                }
            }
            for (v, d) in r.message_prior_logits.iter_mut().zip(&g.prior) {
                *v += 2.0 * d;
            }
        }
        let numeric = objective_elbo(&s, &r, &src, 1.0).unwrap().total;
        assert!(numeric <= closed + 1e-12);
        assert!(closed - numeric < 1e-6, "{closed} vs {numeric}");
        let q = message_marginal(&s, &src).unwrap();
        let p = softmax(&r.message_prior_logits);
        for (a, b) in q.iter().zip(&p) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = RandomSource::new(15).stream(&[]);
    for i in 0..20 {
        let (s, r, src) = random_game(&mut rng, 2 + i % 3, 2 + i % 4, 2.0).unwrap();
        for obj in [Objective::Mi, Objective::Elbo { beta: 0.7 }, Objective::Elbo { beta: 2.0 }] {
            let a = gradients(&s, &r, &src, obj).unwrap();
            let n = finite_difference_gradients(&s, &r, &src, obj, 1e-5).unwrap();
            let mut worst = 0.0f64;
            for (x, y) in a.sender.iter().flatten().zip(n.sender.iter().flatten()) {
                worst = worst.max((x - y).abs());
            }
            for (x, y) in a.recon.iter().flatten().zip(n.recon.iter().flatten()) {
                worst = worst.max((x - y).abs());
            }
            for (x, y) in a.prior.iter().zip(&n.prior) {
                worst = worst.max((x - y).abs());
            }
            assert!(worst < 1e-6, "{obj:?}: {worst}");
        }
    }
}

#[test]
fn perfect_communication_is_reachable() {
    let mut rng = RandomSource::new(16).stream(&[]);
    let (s, r, _) = random_game(&mut rng, 4, 4, 0.5).unwrap();
    let src = SourceDist {
        dist: LogProbVector::uniform(4),
    };
    let t = optimize(&s, &r, &src, Objective::Mi, 3000, 5.0).unwrap();
    let last = t.curve.last().unwrap().objective;
    assert!(last > -1e-3, "{last}");
}
