//! Tabular Lewis signaling game: a sender `S(m|x)`, a receiver `R(x|m)` with
//! a message prior `P(m)`, and their information-theoretic objectives,
//! evaluated exactly by enumeration.
//!
//! ```text
//! J_MI   = E_{p(x) S(m|x)} [log R(x|m)]
//! J_ELBO = J_MI - beta E_{p(x)} KL(S(.|x) || P)
//!        = J_MI + beta E[log P(m)] + beta E_x H(S(.|x))
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::prob::{LogProbVector, RngStream};

/// Regroupings of the ELBO must agree to this tolerance.
pub const REGROUPING_TOL: f64 = 1e-12;

fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    Ok(LogProbVector::from_log_weights(logits.to_vec())?
        .values()
        .to_vec())
}

/// `|X| x |M|` logits; row `x` defines `S(.|x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularSender {
    pub logits: Vec<Vec<f64>>,
}

/// `|M| x |X|` reconstruction logits and `|M|` message-prior logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularReceiver {
    pub recon_logits: Vec<Vec<f64>>,
    pub message_prior_logits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceDist {
    pub dist: LogProbVector,
}

impl TabularSender {
    pub fn new(logits: Vec<Vec<f64>>) -> Result<Self> {
        let n_msg = logits.first().map_or(0, Vec::len);
        if n_msg == 0 || logits.iter().any(|r| r.len() != n_msg) {
            return Err(contract("sender logits must be a non-empty rectangle"));
        }
        Ok(Self { logits })
    }

    pub fn n_inputs(&self) -> usize {
        self.logits.len()
    }

    pub fn n_messages(&self) -> usize {
        self.logits[0].len()
    }

    /// `log S(m|x)` as `[x][m]`.
    pub fn log_probs(&self) -> Result<Vec<Vec<f64>>> {
        self.logits.iter().map(|r| log_softmax(r)).collect()
    }
}

impl TabularReceiver {
    pub fn new(recon_logits: Vec<Vec<f64>>, message_prior_logits: Vec<f64>) -> Result<Self> {
        let n_x = recon_logits.first().map_or(0, Vec::len);
        if n_x == 0 || recon_logits.iter().any(|r| r.len() != n_x) {
            return Err(contract("receiver logits must be a non-empty rectangle"));
        }
        if message_prior_logits.len() != recon_logits.len() {
            return Err(contract("message prior length differs from receiver rows"));
        }
        Ok(Self {
            recon_logits,
            message_prior_logits,
        })
    }

    /// `log R(x|m)` as `[m][x]`.
    pub fn log_recon(&self) -> Result<Vec<Vec<f64>>> {
        self.recon_logits.iter().map(|r| log_softmax(r)).collect()
    }

    pub fn log_prior(&self) -> Result<Vec<f64>> {
        log_softmax(&self.message_prior_logits)
    }
}

fn check_shapes(s: &TabularSender, r: &TabularReceiver, src: &SourceDist) -> Result<()> {
    if src.dist.len() != s.n_inputs() {
        return Err(contract("source size differs from sender inputs"));
    }
    if r.recon_logits.len() != s.n_messages() || r.recon_logits[0].len() != s.n_inputs() {
        return Err(contract("receiver shape differs from sender"));
    }
    Ok(())
}

/// `p(x) S(m|x) * term`, treating zero-mass cells as contributing nothing.
fn weighted(w: f64, term: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * term
    }
}

/// Exact `E_{p(x) S(m|x)}[log R(x|m)]`. Returns `-inf` when the receiver
/// gives zero probability to a reachable `(x, m)`.
pub fn objective_mi(s: &TabularSender, r: &TabularReceiver, src: &SourceDist) -> Result<f64> {
    check_shapes(s, r, src)?;
    let ls = s.log_probs()?;
    let lr = r.log_recon()?;
    let px = src.dist.probs();
    let mut j = 0.0;
    for (x, row) in ls.iter().enumerate() {
        for (m, l) in row.iter().enumerate() {
            j += weighted(px[x] * l.exp(), lr[m][x]);
        }
    }
    Ok(j)
}

/// Sender marginal `q(m) = Σ_x p(x) S(m|x)`.
pub fn message_marginal(s: &TabularSender, src: &SourceDist) -> Result<Vec<f64>> {
    let ls = s.log_probs()?;
    let px = src.dist.probs();
    let mut q = vec![0.0; s.n_messages()];
    for (x, row) in ls.iter().enumerate() {
        for (m, l) in row.iter().enumerate() {
            q[m] += px[x] * l.exp();
        }
    }
    Ok(q)
}

/// Exact `I(X; M)` of the joint `p(x) S(m|x)`.
pub fn mutual_information(s: &TabularSender, src: &SourceDist) -> Result<f64> {
    if src.dist.len() != s.n_inputs() {
        return Err(contract("source size differs from sender inputs"));
    }
    let ls = s.log_probs()?;
    let px = src.dist.probs();
    let q = message_marginal(s, src)?;
    let mut mi = 0.0;
    for (x, row) in ls.iter().enumerate() {
        for (m, l) in row.iter().enumerate() {
            mi += weighted(px[x] * l.exp(), l - q[m].ln());
        }
    }
    Ok(mi)
}

/// The receiver that maximizes both objectives for a fixed sender: the
/// exact posterior `p(x|m)` and the prior `P = q`.
pub fn optimal_receiver(s: &TabularSender, src: &SourceDist) -> Result<TabularReceiver> {
    let ls = s.log_probs()?;
    let lx = src.dist.values();
    let q = message_marginal(s, src)?;
    let recon = (0..s.n_messages())
        .map(|m| {
            if q[m] == 0.0 {
                vec![0.0; s.n_inputs()]
            } else {
                (0..s.n_inputs()).map(|x| lx[x] + ls[x][m]).collect()
            }
        })
        .collect();
    TabularReceiver::new(recon, q.iter().map(|v| v.ln()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboReport {
    /// `J_MI - beta E_x KL(S(.|x) || P)`.
    pub total: f64,
    /// `E[log R(x|m)]`.
    pub communication: f64,
    /// `E_x KL(S(.|x) || P)`, unweighted.
    pub kl: f64,
    /// `beta E[log P(m)]`.
    pub surprisal: f64,
    /// `beta E_x H(S(.|x))`.
    pub entropy_term: f64,
}

impl ElboReport {
    pub fn regrouped_total(&self) -> f64 {
        self.communication + self.surprisal + self.entropy_term
    }
}

pub fn objective_elbo(
    s: &TabularSender,
    r: &TabularReceiver,
    src: &SourceDist,
    beta: f64,
) -> Result<ElboReport> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(domain("beta must be finite and non-negative"));
    }
    let communication = objective_mi(s, r, src)?;
    let ls = s.log_probs()?;
    let lp = r.log_prior()?;
    let px = src.dist.probs();
    let (mut kl, mut log_prior, mut entropy) = (0.0, 0.0, 0.0);
    for (x, row) in ls.iter().enumerate() {
        for (m, l) in row.iter().enumerate() {
            let w = px[x] * l.exp();
            kl += weighted(w, l - lp[m]);
            log_prior += weighted(w, lp[m]);
            entropy -= weighted(w, *l);
        }
    }
    let report = ElboReport {
        total: communication - beta * kl,
        communication,
        kl,
        surprisal: beta * log_prior,
        entropy_term: beta * entropy,
    };
    if report.total.is_finite() {
        let gap = (report.total - report.regrouped_total()).abs();
        if gap > REGROUPING_TOL {
            return Err(Error::Property(format!(
                "ELBO regroupings disagree by {gap}"
            )));
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Objective {
    Mi,
    Elbo { beta: f64 },
}

impl Objective {
    fn beta(self) -> f64 {
        match self {
            Objective::Mi => 0.0,
            Objective::Elbo { beta } => beta,
        }
    }

    pub fn value(self, s: &TabularSender, r: &TabularReceiver, src: &SourceDist) -> Result<f64> {
        match self {
            Objective::Mi => objective_mi(s, r, src),
            Objective::Elbo { beta } => Ok(objective_elbo(s, r, src, beta)?.total),
        }
    }
}

/// Gradients of an objective with respect to every logit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub sender: Vec<Vec<f64>>,
    pub recon: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.sender
            .iter()
            .chain(&self.recon)
            .flatten()
            .chain(&self.prior)
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    fn is_finite(&self) -> bool {
        self.sender
            .iter()
            .chain(&self.recon)
            .flatten()
            .chain(&self.prior)
            .all(|v| v.is_finite())
    }
}

/// Analytic gradient of `J_MI` (beta = 0) or `J_ELBO`.
///
/// With `f(x,m) = log R(x|m) - beta log S(m|x) + beta log P(m)`:
/// sender `p(x) S(m|x) (f - E_S f)`, receiver `w(m,x) - w(m) R(x|m)` with
/// `w = p(x) S(m|x)`, prior `beta (q(m) - P(m))`.
pub fn gradients(
    s: &TabularSender,
    r: &TabularReceiver,
    src: &SourceDist,
    objective: Objective,
) -> Result<Gradients> {
    check_shapes(s, r, src)?;
    let beta = objective.beta();
    let ls = s.log_probs()?;
    let lr = r.log_recon()?;
    let lp = r.log_prior()?;
    let px = src.dist.probs();
    let (nx, nm) = (s.n_inputs(), s.n_messages());

    let mut sender = vec![vec![0.0; nm]; nx];
    for x in 0..nx {
        let f: Vec<f64> = (0..nm)
            .map(|m| {
                let mut v = lr[m][x];
                if beta != 0.0 {
                    v += beta * (lp[m] - ls[x][m]);
                }
                v
            })
            .collect();
        let mean: f64 = (0..nm).map(|m| weighted(ls[x][m].exp(), f[m])).sum();
        for m in 0..nm {
            sender[x][m] = weighted(px[x] * ls[x][m].exp(), f[m] - mean);
        }
    }

    let mut recon = vec![vec![0.0; nx]; nm];
    let mut q = vec![0.0; nm];
    for m in 0..nm {
        let w: Vec<f64> = (0..nx).map(|x| px[x] * ls[x][m].exp()).collect();
        let wm: f64 = w.iter().sum();
        q[m] = wm;
        for x in 0..nx {
            recon[m][x] = w[x] - wm * lr[m][x].exp();
        }
    }
    let prior = (0..nm).map(|m| beta * (q[m] - lp[m].exp())).collect();
    Ok(Gradients {
        sender,
        recon,
        prior,
    })
}

/// Central finite differences of the objective with step `h`.
pub fn finite_difference_gradients(
    s: &TabularSender,
    r: &TabularReceiver,
    src: &SourceDist,
    objective: Objective,
    h: f64,
) -> Result<Gradients> {
    let f = |s: &TabularSender, r: &TabularReceiver| objective.value(s, r, src);
    let mut g = Gradients {
        sender: vec![vec![0.0; s.n_messages()]; s.n_inputs()],
        recon: vec![vec![0.0; s.n_inputs()]; s.n_messages()],
        prior: vec![0.0; s.n_messages()],
    };
    for x in 0..s.n_inputs() {
        for m in 0..s.n_messages() {
            let (mut a, mut b) = (s.clone(), s.clone());
            a.logits[x][m] += h;
            b.logits[x][m] -= h;
            g.sender[x][m] = (f(&a, r)? - f(&b, r)?) / (2.0 * h);
        }
    }
    for m in 0..s.n_messages() {
        for x in 0..s.n_inputs() {
            let (mut a, mut b) = (r.clone(), r.clone());
            a.recon_logits[m][x] += h;
            b.recon_logits[m][x] -= h;
            g.recon[m][x] = (f(s, &a)? - f(s, &b)?) / (2.0 * h);
        }
        let (mut a, mut b) = (r.clone(), r.clone());
        a.message_prior_logits[m] += h;
        b.message_prior_logits[m] -= h;
        g.prior[m] = (f(s, &a)? - f(s, &b)?) / (2.0 * h);
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub objective: f64,
    pub communication: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trained {
    pub sender: TabularSender,
    pub receiver: TabularReceiver,
    /// One point before the first step and one after every step.
    pub curve: Vec<CurvePoint>,
    /// Largest single-step decrease of the objective.
    pub max_decrease: f64,
}

fn curve_point(
    step: usize,
    s: &TabularSender,
    r: &TabularReceiver,
    src: &SourceDist,
    objective: Objective,
) -> Result<CurvePoint> {
    let rep = objective_elbo(s, r, src, objective.beta())?;
    Ok(CurvePoint {
        step,
        objective: rep.total,
        communication: rep.communication,
        kl: rep.kl,
    })
}

/// Full-batch gradient ascent on all logits.
pub fn optimize(
    sender: &TabularSender,
    receiver: &TabularReceiver,
    src: &SourceDist,
    objective: Objective,
    steps: usize,
    learning_rate: f64,
) -> Result<Trained> {
    let (mut s, mut r) = (sender.clone(), receiver.clone());
    let mut curve = vec![curve_point(0, &s, &r, src, objective)?];
    let mut max_decrease = 0.0f64;
    for step in 1..=steps {
        let g = gradients(&s, &r, src, objective)?;
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient at step {step}")));
        }
        for (row, grow) in s.logits.iter_mut().zip(&g.sender) {
            for (v, d) in row.iter_mut().zip(grow) {
                *v += learning_rate * d;
            }
        }
        for (row, grow) in r.recon_logits.iter_mut().zip(&g.recon) {
            for (v, d) in row.iter_mut().zip(grow) {
                *v += learning_rate * d;
            }
        }
        for (v, d) in r.message_prior_logits.iter_mut().zip(&g.prior) {
            *v += learning_rate * d;
        }
        let p = curve_point(step, &s, &r, src, objective)?;
        max_decrease = max_decrease.max(curve[step - 1].objective - p.objective);
        curve.push(p);
    }
    Ok(Trained {
        sender: s,
        receiver: r,
        curve,
        max_decrease,
    })
}

/// Curve as CSV with `#` provenance lines.
pub fn curve_csv(curve: &[CurvePoint], provenance: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in provenance {
        writeln!(out, "# {k}={v}").unwrap();
    }
    out.push_str("step,objective,communication,kl\n");
    for p in curve {
        writeln!(out, "{},{},{},{}", p.step, p.objective, p.communication, p.kl).unwrap();
    }
    out
}

/// Logits drawn uniformly from `[-scale, scale]`.
pub fn random_game(
    rng: &mut RngStream,
    n_inputs: usize,
    n_messages: usize,
    scale: f64,
) -> Result<(TabularSender, TabularReceiver, SourceDist)> {
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n).map(|_| scale * (2.0 * rng.uniform() - 1.0)).collect()
    };
    let s = TabularSender::new((0..n_inputs).map(|_| draw(n_messages)).collect())?;
    let recon = (0..n_messages).map(|_| draw(n_inputs)).collect();
    let r = TabularReceiver::new(recon, draw(n_messages))?;
    let src = SourceDist {
        dist: LogProbVector::from_log_weights(draw(n_inputs))?,
    };
    Ok((s, r, src))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::RandomSource;

    fn uniform_src(n: usize) -> SourceDist {
        SourceDist {
            dist: LogProbVector::uniform(n),
        }
    }

    fn hard(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { f64::NEG_INFINITY })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn bijection_with_inverse_is_perfect() {
        let s = TabularSender::new(hard(3)).unwrap();
        let r = TabularReceiver::new(hard(3), vec![0.0; 3]).unwrap();
        assert_eq!(objective_mi(&s, &r, &uniform_src(3)).unwrap(), 0.0);
        let mi = mutual_information(&s, &uniform_src(3)).unwrap();
        assert!((mi - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_receiver_scores_minus_log_n() {
        let mut rng = RandomSource::new(3).stream(&[1]);
        let (s, _, src) = random_game(&mut rng, 5, 2, 2.0).unwrap();
        let r = TabularReceiver::new(vec![vec![0.0; 5]; 2], vec![0.0; 2]).unwrap();
        assert!((objective_mi(&s, &r, &src).unwrap() + 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn unreachable_reconstruction_is_neg_inf() {
        let s = TabularSender::new(hard(2)).unwrap();
        let mut recon = hard(2);
        recon[0] = vec![f64::NEG_INFINITY, 0.0];
        let r = TabularReceiver::new(recon, vec![0.0; 2]).unwrap();
        assert_eq!(objective_mi(&s, &r, &uniform_src(2)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn independent_sender_has_zero_information() {
        let s = TabularSender::new(vec![vec![0.3, -1.0]; 4]).unwrap();
        assert!(mutual_information(&s, &uniform_src(4)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn elbo_special_cases() {
        let mut rng = RandomSource::new(4).stream(&[1]);
        let (s, r, src) = random_game(&mut rng, 3, 2, 1.5).unwrap();
        let rep = objective_elbo(&s, &r, &src, 0.0).unwrap();
        assert_eq!(rep.total, objective_mi(&s, &r, &src).unwrap());

        // sender rows equal to the prior make the KL term vanish
        let prior = vec![0.4, -0.2];
        let s = TabularSender::new(vec![prior.clone(); 3]).unwrap();
        let r = TabularReceiver::new(r.recon_logits, prior).unwrap();
        let rep = objective_elbo(&s, &r, &src, 1.0).unwrap();
        assert!(rep.kl.abs() < 1e-15);
        assert!((rep.total - rep.communication).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_leave_parameters_alone() {
        let mut rng = RandomSource::new(5).stream(&[1]);
        let (s, r, src) = random_game(&mut rng, 3, 3, 1.0).unwrap();
        let t = optimize(&s, &r, &src, Objective::Mi, 0, 0.5).unwrap();
        assert_eq!(t.sender, s);
        assert_eq!(t.receiver, r);
        assert_eq!(t.curve.len(), 1);
    }

    #[test]
    fn negative_beta_is_rejected() {
        let mut rng = RandomSource::new(6).stream(&[1]);
        let (s, r, src) = random_game(&mut rng, 2, 2, 1.0).unwrap();
        assert!(objective_elbo(&s, &r, &src, -0.1).is_err());
    }
}
