//! Interleaved resampling and wild refitting, radius estimation, noise-scale
//! tuning and bound assembly.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, Direction, OptimismPair};
use crate::model::{
    self, Concurrency, EvaluationConfig, EvaluationError, Fitted, PredictorHandle, RefitState, RegressionDataset,
    RhoMode, Trainer,
};
use crate::rng;
use crate::sampling::{self, Subsample};

/// Flag set when the pilot term cannot be evaluated (no ground truth).
pub const FLAG_PILOT_OMITTED: &str = "pilot-term-omitted";
/// Flag set when the random-design logarithmic term needs a decay exponent.
pub const FLAG_LOG_TERM_OMITTED: &str = "log-term-omitted";
/// Flag set when the decay term of the refit radius was dropped.
pub const FLAG_DECAY_TERM_OMITTED: &str = "decay-term-omitted";
/// Always present: suprema are maximized over fitted candidates only.
pub const NOTE_CANDIDATE_PROXY: &str = "suprema evaluated over the candidate set (proxy, not exact sup)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("decay exponent v = {v} must exceed d/2 = {} when M_v > 0", *d as f64 / 2.0)]
    DecayRegime { v: f64, d: usize },
    #[error("empty candidate set")]
    NoCandidates,
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("target norm must be positive and finite, got {0}")]
    BadTarget(f64),
    #[error("residuals restricted to the subsample are all zero")]
    DegenerateResiduals,
    #[error("no bracket for target {target} within {iterations} fits (best norm {best_norm} at rho {best_rho})")]
    NoBracket {
        target: f64,
        iterations: usize,
        best_rho: f64,
        best_norm: f64,
    },
    #[error("norm decreased while rho grew (target {target}); best effort rho {}", outcome.rho)]
    NonMonotone { target: f64, outcome: Box<TuneOutcome> },
    #[error("refit failed during tuning: {0}")]
    Refit(#[source] Box<EvaluationError>),
}

/// One side (plus or minus) of a wild refit on a subsample.
#[derive(Clone)]
pub struct SideFit {
    pub rho: f64,
    pub direction: Direction,
    pub fitted: Fitted,
    /// Refit predictions on the subsample covariates.
    pub sub_vals: Vec<f64>,
    /// Refit predictions on all `n` training covariates.
    pub full_vals: Vec<f64>,
    /// `‖f_wild − f̆‖_S`.
    pub norm: f64,
    pub optimism: f64,
}

impl fmt::Debug for SideFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SideFit")
            .field("rho", &self.rho)
            .field("direction", &self.direction)
            .field("norm", &self.norm)
            .field("optimism", &self.optimism)
            .finish_non_exhaustive()
    }
}

/// Artifacts of one resample-and-refit round.
#[derive(Debug, Clone)]
pub struct WildRound {
    pub k: usize,
    pub sub: Subsample,
    pub tilde: SideFit,
    pub check: SideFit,
}

/// The flat per-round row written to `rounds.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub k: usize,
    pub m: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub opt_tilde: f64,
    pub opt_check: f64,
    pub norm_tilde: f64,
    pub norm_check: f64,
    pub trainer_tol: f64,
}

impl WildRound {
    pub fn rho1(&self) -> f64 {
        self.tilde.rho
    }

    pub fn rho2(&self) -> f64 {
        self.check.rho
    }

    pub fn optimism(&self) -> OptimismPair {
        OptimismPair {
            opt_tilde: self.tilde.optimism,
            opt_check: self.check.optimism,
        }
    }

    pub fn norm_tilde(&self) -> f64 {
        self.tilde.norm
    }

    pub fn norm_check(&self) -> f64 {
        self.check.norm
    }

    /// The larger of the two refits' declared tolerances.
    pub fn trainer_tol(&self) -> f64 {
        self.tilde.fitted.tolerance.max(self.check.fitted.tolerance)
    }

    pub fn record(&self) -> RoundRecord {
        RoundRecord {
            k: self.k,
            m: self.sub.m(),
            rho1: self.rho1(),
            rho2: self.rho2(),
            opt_tilde: self.tilde.optimism,
            opt_check: self.check.optimism,
            norm_tilde: self.tilde.norm,
            norm_check: self.check.norm,
            trainer_tol: self.trainer_tol(),
        }
    }
}

/// Subsample values reused across refits on the same `S`.
struct SubView {
    data: RegressionDataset,
    breve: Vec<f64>,
    signs: Vec<f64>,
    resid: Vec<f64>,
}

impl SubView {
    fn new(state: &RefitState, dataset: &RegressionDataset, sub: &Subsample) -> Self {
        Self {
            data: dataset.subset(sub.indices()),
            breve: sub.gather(&state.breve_vals),
            signs: sub.gather(&state.signs),
            resid: sub.gather(&state.residuals),
        }
    }
}

fn direction_tag(direction: Direction) -> &'static str {
    match direction {
        Direction::Plus => "tilde",
        Direction::Minus => "check",
    }
}

fn fit_side(
    view: &SubView,
    dataset: &RegressionDataset,
    trainer: &dyn Trainer,
    k: usize,
    rho: f64,
    direction: Direction,
    fit_seed: u64,
) -> Result<SideFit, EvaluationError> {
    let ys = metrics::wild_responses(&view.breve, &view.signs, &view.resid, rho, direction)?;
    let wild = view.data.with_responses(ys)?;
    let fitted = trainer
        .fit(&wild, fit_seed)
        .map_err(|source| EvaluationError::TrainerFailed {
            context: format!("round {k}, {} refit at rho {rho}", direction_tag(direction)),
            source,
        })?;
    let sub_vals = fitted.predictor.predict_dataset(&view.data);
    let full_vals = fitted.predictor.predict_dataset(dataset);
    if sub_vals.iter().chain(&full_vals).any(|v| !v.is_finite()) {
        return Err(EvaluationError::NonFiniteData("refit predictions"));
    }
    let norm = metrics::distance(&sub_vals, &view.breve)?;
    let optimism = match direction {
        Direction::Plus => metrics::wild_optimism(&view.signs, &view.resid, &sub_vals, &view.breve)?,
        Direction::Minus => metrics::wild_optimism(&view.signs, &view.resid, &view.breve, &sub_vals)?,
    };
    Ok(SideFit {
        rho,
        direction,
        fitted,
        sub_vals,
        full_vals,
        norm,
        optimism,
    })
}

fn side_seed(state: &RefitState, direction: Direction, k: usize) -> u64 {
    rng::derive_seed(state.seed, direction_tag(direction), k as u64)
}

/// Round `k`: builds both wild datasets on `sub`, refits, and measures the
/// optimisms and sub-scale distances. Refit seeds are derived from
/// `(state.seed, "tilde" | "check", k)`.
pub fn run_round(
    state: &RefitState,
    dataset: &RegressionDataset,
    trainer: &dyn Trainer,
    k: usize,
    sub: &Subsample,
    rho1: f64,
    rho2: f64,
) -> Result<WildRound, EvaluationError> {
    let view = SubView::new(state, dataset, sub);
    let tilde = fit_side(
        &view,
        dataset,
        trainer,
        k,
        rho1,
        Direction::Plus,
        side_seed(state, Direction::Plus, k),
    )?;
    let check = fit_side(
        &view,
        dataset,
        trainer,
        k,
        rho2,
        Direction::Minus,
        side_seed(state, Direction::Minus, k),
    )?;
    Ok(WildRound {
        k,
        sub: sub.clone(),
        tilde,
        check,
    })
}

fn check_delta(delta: f64) -> Result<(), BoundError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(BoundError::BadParam(format!("delta must lie in (0,1), got {delta}")))
    }
}

fn check_nonneg(name: &str, x: f64) -> Result<(), BoundError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(BoundError::BadParam(format!("{name} must be nonnegative, got {x}")))
    }
}

/// `R(δ) = r·10√2·τ·√ln(1/δ)/√n + 32·r·τ·√ln(K/δ)/√K`.
pub fn deviation_term(r: f64, tau: f64, delta: f64, n: usize, k: usize) -> Result<f64, BoundError> {
    check_nonneg("r", r)?;
    check_nonneg("tau", tau)?;
    check_delta(delta)?;
    if n == 0 || k == 0 {
        return Err(BoundError::BadParam("n and K must be at least 1".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let first = r * 10.0 * std::f64::consts::SQRT_2 * tau * (1.0 / delta).ln().sqrt() / nf.sqrt();
    let second = 32.0 * r * tau * (kf / delta).ln().sqrt() / kf.sqrt();
    Ok(first + second)
}

/// The refit target radius `r̃`.
///
/// For `d = 1`:
/// `3√(w̄/w̲)·r + 7√w̄·M_v/√((2v−1)w̲)·(ln n)^{v−1/2}/√(n^{β(2v−1)})`.
/// For `d > 1`:
/// `3√(w̄/w̲)·r + 4M_v√(w̄S_d/(w̲(2v−d)))·(ln n)^{v−d/2}/n^{(v−d/2)β/(2d+1)}`
/// with `S_d = 2d·3^{d−1}`. With `M_v = 0` the second term is 0 for any `v`.
#[allow(clippy::too_many_arguments)]
pub fn r_tilde(
    r: f64,
    n: usize,
    beta: f64,
    d: usize,
    v: f64,
    m_v: f64,
    w_bar: f64,
    w_under: f64,
) -> Result<f64, BoundError> {
    check_nonneg("r", r)?;
    check_nonneg("M_v", m_v)?;
    if n == 0 || d == 0 {
        return Err(BoundError::BadParam("n and d must be at least 1".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(BoundError::BadParam(format!("beta must lie in (0,1), got {beta}")));
    }
    if !(w_under > 0.0 && w_bar > 0.0 && w_bar.is_finite()) {
        return Err(BoundError::BadParam("density bounds must be positive".into()));
    }
    let head = 3.0 * (w_bar / w_under).sqrt() * r;
    if m_v == 0.0 {
        return Ok(head);
    }
    let df = d as f64;
    if !(v > df / 2.0) {
        return Err(BoundError::DecayRegime { v, d });
    }
    let (nf, ln_n) = (n as f64, (n as f64).ln());
    let tail = if d == 1 {
        7.0 * w_bar.sqrt() * m_v / ((2.0 * v - 1.0) * w_under).sqrt() * ln_n.powf(v - 0.5)
            / nf.powf(beta * (2.0 * v - 1.0)).sqrt()
    } else {
        let s_d = 2.0 * df * 3f64.powi(d as i32 - 1);
        let e = v - df / 2.0;
        4.0 * m_v * (w_bar * s_d / (w_under * (2.0 * v - df))).sqrt() * ln_n.powf(e)
            / nf.powf(e * beta / (2.0 * df + 1.0))
    };
    Ok(head + tail)
}

/// Result of a noise-scale search.
#[derive(Clone)]
pub struct TuneOutcome {
    pub rho: f64,
    pub fit: SideFit,
    pub achieved_norm: f64,
    pub iterations: usize,
    /// False when the fit budget ran out before the tolerance was met.
    pub converged: bool,
}

impl fmt::Debug for TuneOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TuneOutcome")
            .field("rho", &self.rho)
            .field("achieved_norm", &self.achieved_norm)
            .field("iterations", &self.iterations)
            .field("converged", &self.converged)
            .finish()
    }
}

/// Settings for [`tune_noise_scale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneSettings {
    pub target: f64,
    pub direction: Direction,
    pub tol_rel: f64,
    pub max_iter: usize,
    pub rho_init: f64,
}

struct Search<'a> {
    view: &'a SubView,
    dataset: &'a RegressionDataset,
    trainer: &'a dyn Trainer,
    k: usize,
    direction: Direction,
    seed: u64,
    target: f64,
    iterations: usize,
    best: Option<SideFit>,
}

impl Search<'_> {
    fn eval(&mut self, rho: f64) -> Result<SideFit, TuneError> {
        self.iterations += 1;
        let fit = fit_side(
            self.view,
            self.dataset,
            self.trainer,
            self.k,
            rho,
            self.direction,
            self.seed,
        )
        .map_err(|e| TuneError::Refit(Box::new(e)))?;
        let gap = |f: &SideFit| (f.norm - self.target).abs();
        if self.best.as_ref().is_none_or(|b| gap(&fit) < gap(b)) {
            self.best = Some(fit.clone());
        }
        Ok(fit)
    }

    fn outcome(&self, fit: SideFit, converged: bool) -> TuneOutcome {
        TuneOutcome {
            rho: fit.rho,
            achieved_norm: fit.norm,
            fit,
            iterations: self.iterations,
            converged,
        }
    }

    fn best_outcome(&self) -> TuneOutcome {
        let best = self.best.clone().expect("at least one fit ran");
        self.outcome(best, false)
    }
}

/// Finds `rho` with `|‖f_rho − f̆‖_S − target| ≤ tol_rel·target` by geometric
/// bracketing from `rho_init` followed by bisection. Assumes the norm is
/// nondecreasing in `rho`; a drop of more than `10·tol_rel·target` across a
/// doubling (or a rise across a halving) is reported as
/// [`TuneError::NonMonotone`] with the closest fit seen.
pub fn tune_noise_scale(
    state: &RefitState,
    dataset: &RegressionDataset,
    trainer: &dyn Trainer,
    k: usize,
    sub: &Subsample,
    settings: TuneSettings,
) -> Result<TuneOutcome, TuneError> {
    let TuneSettings {
        target,
        direction,
        tol_rel,
        max_iter,
        rho_init,
    } = settings;
    if !(target > 0.0 && target.is_finite()) {
        return Err(TuneError::BadTarget(target));
    }
    let view = SubView::new(state, dataset, sub);
    if view.resid.iter().all(|v| *v == 0.0) {
        return Err(TuneError::DegenerateResiduals);
    }
    let mut search = Search {
        view: &view,
        dataset,
        trainer,
        k,
        direction,
        seed: side_seed(state, direction, k),
        target,
        iterations: 0,
        best: None,
    };
    let tol = tol_rel * target;
    let slack = 10.0 * tol;
    let no_bracket = |s: &Search| {
        let b = s.best.as_ref().expect("at least one fit ran");
        TuneError::NoBracket {
            target,
            iterations: s.iterations,
            best_rho: b.rho,
            best_norm: b.norm,
        }
    };

    let first = search.eval(rho_init)?;
    if (first.norm - target).abs() <= tol {
        return Ok(search.outcome(first, true));
    }
    // Bracket so that norm(lo) < target < norm(hi).
    let (mut lo, mut hi) = if first.norm < target {
        let mut prev = first;
        loop {
            if search.iterations >= max_iter {
                return Err(no_bracket(&search));
            }
            let next = search.eval(prev.rho * 2.0)?;
            if next.norm < prev.norm - slack {
                return Err(TuneError::NonMonotone {
                    target,
                    outcome: Box::new(search.best_outcome()),
                });
            }
            if (next.norm - target).abs() <= tol {
                return Ok(search.outcome(next, true));
            }
            if next.norm > target {
                break (prev.rho, next.rho);
            }
            prev = next;
        }
    } else {
        let mut prev = first;
        loop {
            if search.iterations >= max_iter {
                return Err(no_bracket(&search));
            }
            let next = search.eval(prev.rho / 2.0)?;
            if next.norm > prev.norm + slack {
                return Err(TuneError::NonMonotone {
                    target,
                    outcome: Box::new(search.best_outcome()),
                });
            }
            if (next.norm - target).abs() <= tol {
                return Ok(search.outcome(next, true));
            }
            if next.norm < target {
                break (next.rho, prev.rho);
            }
            prev = next;
        }
    };
    while search.iterations < max_iter {
        let mid = 0.5 * (lo + hi);
        let fit = search.eval(mid)?;
        if (fit.norm - target).abs() <= tol {
            return Ok(search.outcome(fit, true));
        }
        if fit.norm < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(search.best_outcome())
}

/// Which term of the radius maximum was active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusBranch {
    TSquared,
    Diamond,
    Sharp,
    Slope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusComponents {
    /// `t²/√n`.
    pub t_squared: f64,
    pub r_diamond: f64,
    pub r_sharp: f64,
    /// `W((2+1/t) r◇)/r◇`, 0 when `r◇ = 0`.
    pub w_slope: f64,
    /// `H((2+1/t) r♯)/r♯`, 0 when `r♯ = 0`.
    pub h_slope: f64,
    /// `2(w_slope + h_slope)`.
    pub slope: f64,
    /// Sum of the three additive deviation terms.
    pub additive: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub r: f64,
    pub branch: RadiusBranch,
    pub components: RadiusComponents,
    pub t: f64,
    pub tau: f64,
    /// `1 − 4τ/t > 0`.
    pub valid: bool,
}

/// Largest `(1/n)Σ ε_i v_i s·(f − f̆)(x_i)` over candidates in the ball
/// `‖f − f̆‖_D ≤ radius`. `f̆` itself is always in the ball and scores 0.
fn candidate_sup(
    state: &RefitState,
    candidates: &[&[f64]],
    radius: f64,
    weights: &[f64],
    sign: f64,
) -> Result<f64, BoundError> {
    let mut best = 0.0_f64;
    for vals in candidates {
        let diff: Vec<f64> = vals
            .iter()
            .zip(&state.breve_vals)
            .map(|(f, b)| sign * (f - b))
            .collect();
        let dist = metrics::empirical_norm(&diff).map_err(|e| BoundError::BadParam(e.to_string()))?;
        if dist <= radius {
            let value =
                metrics::full_average(&state.signs, weights, &diff).map_err(|e| BoundError::BadParam(e.to_string()))?;
            best = best.max(value);
        }
    }
    Ok(best)
}

/// Upper bound `r` on `‖f̆ − f*‖_D` from the radius-estimation rounds.
///
/// The slope proxies maximize `A_n` (plus side) and `C_n` (minus side) over
/// every round predictor, tilde and check alike, plus `f̆`, restricted to
/// the ball of radius `(2+1/t)·r◇` (respectively `r♯`). `c` is the unnamed
/// constant of the pilot-error additive term.
pub fn estimate_radius(
    state: &RefitState,
    rounds: &[WildRound],
    t: f64,
    tau: f64,
    c: f64,
) -> Result<RadiusEstimate, BoundError> {
    if rounds.is_empty() {
        return Err(BoundError::BadParam(
            "radius estimation needs at least one round".into(),
        ));
    }
    check_nonneg("tau", tau)?;
    check_nonneg("C", c)?;
    if !(t > 4.0 * tau && t > 3.0 && t.is_finite()) {
        return Err(BoundError::BadParam(format!(
            "t = {t} must exceed max(3, 4 tau = {})",
            4.0 * tau
        )));
    }
    let n = state.breve_vals.len();
    let nf = n as f64;
    let k1 = rounds.len() as f64;
    let r_diamond = rounds.iter().map(|r| r.tilde.norm).sum::<f64>() / k1;
    let r_sharp = rounds.iter().map(|r| r.check.norm).sum::<f64>() / k1;
    let candidates: Vec<&[f64]> = rounds
        .iter()
        .flat_map(|r| [r.tilde.full_vals.as_slice(), r.check.full_vals.as_slice()])
        .collect();
    let widen = 2.0 + 1.0 / t;
    let w_slope = if r_diamond > 0.0 {
        candidate_sup(state, &candidates, widen * r_diamond, &state.residuals, 1.0)? / r_diamond
    } else {
        0.0
    };
    let h_slope = if r_sharp > 0.0 {
        candidate_sup(state, &candidates, widen * r_sharp, &state.residuals, -1.0)? / r_sharp
    } else {
        0.0
    };
    let t_squared = t * t / nf.sqrt();
    let slope = 2.0 * (w_slope + h_slope);
    let branches = [
        (RadiusBranch::TSquared, t_squared),
        (RadiusBranch::Diamond, r_diamond),
        (RadiusBranch::Sharp, r_sharp),
        (RadiusBranch::Slope, slope),
    ];
    let (branch, top) = branches
        .into_iter()
        .fold((RadiusBranch::TSquared, f64::NEG_INFINITY), |acc, (b, v)| {
            if v > acc.1 {
                (b, v)
            } else {
                acc
            }
        });
    let tt = tau * t / nf.sqrt();
    let additive = widen * 4.0 * std::f64::consts::SQRT_2 * tt + 2.0 * tt + c * widen * tt;
    let denom = 1.0 - 4.0 * tau / t;
    Ok(RadiusEstimate {
        r: (top + additive) / denom,
        branch,
        components: RadiusComponents {
            t_squared,
            r_diamond,
            r_sharp,
            w_slope,
            h_slope,
            slope,
            additive,
        },
        t,
        tau,
        valid: denom > 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotProxy {
    pub value: f64,
    /// True when no ground truth was available and the term was set to 0.
    pub omitted: bool,
    /// Candidates (excluding `f̆`) that fell inside the ball.
    pub in_ball: usize,
}

/// Candidate-set proxy for the pilot error term, with candidates given as
/// their predictions at the training covariates.
///
/// Evaluates `sup (1/n)Σ ε_i (f̄ − f*)(x_i)(f − f̆)(x_i)` plus the same with
/// `f̆ − f`, each over the candidates with `‖f − f̆‖_D ≤ radius` and `f̆`
/// itself. Without `f*` returns 0 flagged as omitted.
pub fn pilot_error_proxy_values(
    state: &RefitState,
    pilot_vals: &[f64],
    fstar_vals: Option<&[f64]>,
    candidates: &[&[f64]],
    radius: f64,
) -> Result<PilotProxy, BoundError> {
    if candidates.is_empty() {
        return Err(BoundError::NoCandidates);
    }
    check_nonneg("radius", radius)?;
    let Some(fstar) = fstar_vals else {
        return Ok(PilotProxy {
            value: 0.0,
            omitted: true,
            in_ball: 0,
        });
    };
    let gap: Vec<f64> = pilot_vals.iter().zip(fstar).map(|(p, s)| p - s).collect();
    let in_ball = candidates
        .iter()
        .filter(|c| metrics::distance(c, &state.breve_vals).is_ok_and(|d| d <= radius))
        .count();
    let plus = candidate_sup(state, candidates, radius, &gap, 1.0)?;
    let minus = candidate_sup(state, candidates, radius, &gap, -1.0)?;
    Ok(PilotProxy {
        value: plus + minus,
        omitted: false,
        in_ball,
    })
}

/// [`pilot_error_proxy_values`] with candidates given as predictors.
pub fn pilot_error_proxy(
    state: &RefitState,
    dataset: &RegressionDataset,
    fstar: Option<&PredictorHandle>,
    candidates: &[PredictorHandle],
    radius: f64,
) -> Result<PilotProxy, BoundError> {
    let vals: Vec<Vec<f64>> = candidates.iter().map(|c| c.predict_dataset(dataset)).collect();
    let refs: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
    let pilot_vals = state.pilot.predict_dataset(dataset);
    let fstar_vals = fstar.map(|f| f.predict_dataset(dataset));
    pilot_error_proxy_values(state, &pilot_vals, fstar_vals.as_deref(), &refs, radius)
}

/// Optional ground truth and pilot for [`evaluate_with`].
#[derive(Clone, Default)]
pub struct EvalContext {
    pub pilot: Option<PredictorHandle>,
    pub fstar: Option<PredictorHandle>,
}

/// One assembled bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    /// The shared noise scale in fixed-grid mode; absent in tuned mode.
    pub rho: Option<f64>,
    pub rounds_used: usize,
    pub mean_opt_tilde: f64,
    pub mean_opt_check: f64,
    /// `mean_opt_tilde + mean_opt_check`.
    pub wild_optimism_bound: f64,
    pub deviation: f64,
    pub pilot_proxy: f64,
    pub r: f64,
    pub r_tilde: f64,
    pub radius_estimate: Option<RadiusEstimate>,
    /// `mean_opt_tilde + mean_opt_check + deviation + pilot_proxy`.
    pub fixed_design_bound: f64,
    /// `(4w̄/w̲)(optimisms + deviation + pilot) + log_term`.
    pub random_design_bound: f64,
    pub log_term: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    FixedGrid,
    Tuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBoundReport {
    pub mode: ModeName,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub tau: f64,
    pub t: f64,
    pub delta: f64,
    pub confidence_fixed_design: f64,
    pub confidence_random_design: f64,
    pub breve_tolerance: f64,
    pub bounds: Vec<BoundEntry>,
    pub rounds: Vec<RoundRecord>,
    pub flags: Vec<String>,
    pub notes: Vec<String>,
}

impl RiskBoundReport {
    /// Smallest wild-optimism bound over the entries.
    pub fn min_wild_optimism_bound(&self) -> Option<f64> {
        self.bounds.iter().map(|b| b.wild_optimism_bound).min_by(f64::total_cmp)
    }
}

/// The report plus the artifacts it was assembled from.
pub struct Evaluation {
    pub report: RiskBoundReport,
    pub state: RefitState,
    pub subsamples: Vec<Subsample>,
    /// One list of rounds per bound entry.
    pub rounds: Vec<Vec<WildRound>>,
}

fn map_rounds<T, F>(parallel: bool, ks: std::ops::Range<usize>, f: F) -> Result<Vec<T>, EvaluationError>
where
    T: Send,
    F: Fn(usize) -> Result<T, EvaluationError> + Sync + Send,
{
    if parallel {
        ks.into_par_iter().map(f).collect()
    } else {
        ks.map(f).collect()
    }
}

/// `C̃·(w̄/w̲)·ln n·max(ln ln n, 0)·ln(1/δ)/n^{1−d/(2v)}`, defined for `v > d/2`.
pub fn log_term(c: f64, w_bar: f64, w_under: f64, n: usize, d: usize, v: f64, delta: f64) -> Result<f64, BoundError> {
    check_nonneg("log-term constant", c)?;
    check_delta(delta)?;
    if !(v > d as f64 / 2.0) {
        return Err(BoundError::DecayRegime { v, d });
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let lnln = if ln_n > 0.0 { ln_n.ln().max(0.0) } else { 0.0 };
    Ok(c * (w_bar / w_under) * ln_n * lnln * (1.0 / delta).ln() / nf.powf(1.0 - d as f64 / (2.0 * v)))
}

struct Assembler<'a> {
    config: &'a EvaluationConfig,
    state: &'a RefitState,
    n: usize,
    d: usize,
    tau: f64,
    t: f64,
    pilot_vals: Vec<f64>,
    fstar_vals: Option<Vec<f64>>,
    flags: Vec<String>,
}

impl Assembler<'_> {
    fn flag(&mut self, f: &str) {
        if !self.flags.iter().any(|x| x == f) {
            self.flags.push(f.to_string());
        }
    }

    fn radius(&self, rounds: &[WildRound]) -> Result<(f64, Option<RadiusEstimate>), BoundError> {
        match self.config.radius {
            Some(r) => Ok((r, None)),
            None => {
                let est = estimate_radius(self.state, rounds, self.t, self.tau, self.config.radius_constant)?;
                Ok((est.r, Some(est)))
            }
        }
    }

    fn r_tilde(&mut self, r: f64) -> Result<f64, BoundError> {
        let c = self.config;
        match (c.v, c.m_v) {
            (Some(v), Some(m_v)) => r_tilde(r, self.n, c.beta, self.d, v, m_v, c.w_bar, c.w_under),
            _ => {
                self.flag(FLAG_DECAY_TERM_OMITTED);
                r_tilde(r, self.n, c.beta, self.d, 1.0, 0.0, c.w_bar, c.w_under)
            }
        }
    }

    fn entry(
        &mut self,
        rho: Option<f64>,
        bound_rounds: &[WildRound],
        candidate_rounds: &[WildRound],
        r: f64,
        radius_estimate: Option<RadiusEstimate>,
    ) -> Result<BoundEntry, EvaluationError> {
        let c = self.config;
        let kf = bound_rounds.len() as f64;
        let mean_opt_tilde = bound_rounds.iter().map(|w| w.tilde.optimism).sum::<f64>() / kf;
        let mean_opt_check = bound_rounds.iter().map(|w| w.check.optimism).sum::<f64>() / kf;
        let deviation = deviation_term(r, self.tau, c.delta, self.n, bound_rounds.len())?;
        let r_tilde = self.r_tilde(r)?;

        let mut candidates: Vec<&[f64]> = candidate_rounds
            .iter()
            .flat_map(|w| [w.tilde.full_vals.as_slice(), w.check.full_vals.as_slice()])
            .collect();
        candidates.push(&self.pilot_vals);
        if let Some(f) = &self.fstar_vals {
            candidates.push(f);
        }
        let pilot = pilot_error_proxy_values(
            self.state,
            &self.pilot_vals,
            self.fstar_vals.as_deref(),
            &candidates,
            2.0 * r,
        )?;
        if pilot.omitted {
            self.flag(FLAG_PILOT_OMITTED);
        }

        let log = match c.v {
            Some(v) if v > self.d as f64 / 2.0 => Some(log_term(
                c.log_term_constant,
                c.w_bar,
                c.w_under,
                self.n,
                self.d,
                v,
                c.delta,
            )?),
            _ => {
                self.flag(FLAG_LOG_TERM_OMITTED);
                None
            }
        };
        let opts = mean_opt_tilde + mean_opt_check;
        let fixed = mean_opt_tilde + mean_opt_check + deviation + pilot.value;
        let random = 4.0 * c.w_bar / c.w_under * (opts + deviation + pilot.value) + log.unwrap_or(0.0);
        Ok(BoundEntry {
            rho,
            rounds_used: bound_rounds.len(),
            mean_opt_tilde,
            mean_opt_check,
            wild_optimism_bound: opts,
            deviation,
            pilot_proxy: pilot.value,
            r,
            r_tilde,
            radius_estimate,
            fixed_design_bound: fixed,
            random_design_bound: random,
            log_term: log,
        })
    }
}

/// [`evaluate_with`] without a pilot or ground truth.
pub fn evaluate(
    dataset: &RegressionDataset,
    trainer: &dyn Trainer,
    config: &EvaluationConfig,
) -> Result<RiskBoundReport, EvaluationError> {
    Ok(evaluate_with(dataset, trainer, config, &EvalContext::default())?.report)
}

/// Runs the warm-up, the resampling rounds and the bound assembly.
///
/// Fixed-grid mode runs all `K` rounds at every grid value on the same
/// subsamples, with `rho1 = rho2`, and reports one bound per value. The
/// radius is `config.radius` when given, otherwise estimated from the first
/// `K1` rounds at that value (all `K` rounds when `K1 = 0`).
///
/// Tuned mode runs `K1` rounds at `rho_init`, estimates `r` (unless fixed),
/// then tunes each side of rounds `K1..K` to the sub-scale distance `2r̃`,
/// and reports one bound over those `K − K1` rounds.
pub fn evaluate_with(
    dataset: &RegressionDataset,
    trainer: &dyn Trainer,
    config: &EvaluationConfig,
    ctx: &EvalContext,
) -> Result<Evaluation, EvaluationError> {
    let n = dataset.n();
    config.validate(n)?;
    let state = model::warm_up(dataset, trainer, ctx.pilot.clone(), config.seed)?;
    let tau = config.tau.resolve(&state.residuals)?;
    let t = config.t.unwrap_or(3f64.max(4.0 * tau) + 0.1);
    let m = config.subsample_size(n);
    let subsamples = (0..config.rounds)
        .map(|k| {
            sampling::srswor(
                n,
                m,
                config.strategy,
                rng::derive_seed(config.seed, "subsample", k as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let parallel = config.parallel && trainer.concurrency() == Concurrency::Concurrent;

    let mut asm = Assembler {
        config,
        state: &state,
        n,
        d: dataset.d(),
        tau,
        t,
        pilot_vals: state.pilot.predict_dataset(dataset),
        fstar_vals: ctx.fstar.as_ref().map(|f| f.predict_dataset(dataset)),
        flags: Vec::new(),
    };

    let mut entries = Vec::new();
    let mut all_rounds = Vec::new();
    let mode = match &config.rho {
        RhoMode::FixedGrid { grid } => {
            for &rho in grid {
                let rounds = map_rounds(parallel, 0..config.rounds, |k| {
                    run_round(&state, dataset, trainer, k, &subsamples[k], rho, rho)
                })?;
                let k1 = if config.radius_rounds == 0 {
                    config.rounds
                } else {
                    config.radius_rounds
                };
                let (r, est) = asm.radius(&rounds[..k1])?;
                entries.push(asm.entry(Some(rho), &rounds, &rounds, r, est)?);
                all_rounds.push(rounds);
            }
            ModeName::FixedGrid
        }
        RhoMode::Tuned => {
            let k1 = config.radius_rounds;
            let mut rounds = map_rounds(parallel, 0..k1, |k| {
                run_round(
                    &state,
                    dataset,
                    trainer,
                    k,
                    &subsamples[k],
                    config.rho_init,
                    config.rho_init,
                )
            })?;
            let (r, est) = asm.radius(&rounds)?;
            let target = 2.0 * asm.r_tilde(r)?;
            let tuned = map_rounds(parallel, k1..config.rounds, |k| {
                let tune = |direction| {
                    let settings = TuneSettings {
                        target,
                        direction,
                        tol_rel: config.tol_rho,
                        max_iter: config.max_tune_iter,
                        rho_init: config.rho_init,
                    };
                    match tune_noise_scale(&state, dataset, trainer, k, &subsamples[k], settings) {
                        Ok(o) => Ok((o, false)),
                        Err(TuneError::NonMonotone { outcome, .. }) => Ok((*outcome, true)),
                        Err(source) => Err(EvaluationError::Tune { round: k, source }),
                    }
                };
                let (plus, plus_nm) = tune(Direction::Plus)?;
                let (minus, minus_nm) = tune(Direction::Minus)?;
                let round = WildRound {
                    k,
                    sub: subsamples[k].clone(),
                    tilde: plus.fit,
                    check: minus.fit,
                };
                let warn = plus_nm || minus_nm;
                let unconverged = !(plus.converged && minus.converged);
                Ok((round, warn, unconverged))
            })?;
            let mut tuned_rounds = Vec::with_capacity(tuned.len());
            for (round, warn, unconverged) in tuned {
                if warn {
                    asm.flag(&format!("non-monotone-tuning:round-{}", round.k));
                }
                if unconverged {
                    asm.flag(&format!("tuning-not-converged:round-{}", round.k));
                }
                tuned_rounds.push(round);
            }
            let entry = asm.entry(
                None,
                &tuned_rounds,
                &[rounds.as_slice(), tuned_rounds.as_slice()].concat(),
                r,
                est,
            )?;
            entries.push(entry);
            rounds.extend(tuned_rounds);
            all_rounds.push(rounds);
            ModeName::Tuned
        }
    };

    let flags = std::mem::take(&mut asm.flags);
    let report = RiskBoundReport {
        mode,
        n,
        d: dataset.d(),
        m,
        tau,
        t,
        delta: config.delta,
        confidence_fixed_design: 1.0 - 5.0 * config.delta,
        confidence_random_design: 1.0 - 6.0 * config.delta,
        breve_tolerance: state.breve_tolerance,
        bounds: entries,
        rounds: all_rounds.iter().flatten().map(WildRound::record).collect(),
        flags,
        notes: vec![NOTE_CANDIDATE_PROXY.to_string()],
    };
    Ok(Evaluation {
        report,
        state,
        subsamples,
        rounds: all_rounds,
    })
}
