//! Reconstruction: Error Reduction, sequential ptychographic sweeps with the
//! three update rules, the simultaneous gradient step, the 20 benchmark
//! schemes and the intensity-constraint adaptation loop.
//!
//! The object update for one probe position at `X` is always written against
//! the exit wave `g = O(x) P(x - X)` and its padded far field `G`:
//!
//! * gradient descent: `O <- O - mu P* crop(idft2(R))`, with `R` the Fourier
//!   residual of the chosen cost functional;
//! * Fourier mixing: `|G|^2` is replaced by `T^-1((1 - mu) T(|G|^2) + mu T(y))`
//!   keeping the phase of `G`, then `O <- O + P* (g_new - g)`;
//! * object mixing: the full (`mu = 1`) amplitude update `O'` is computed and
//!   the moduli are mixed in `T` space, `|O| <- T^-1((1 - mu) T(|O|) + mu T(|O'|))`,
//!   while the phase follows the normalised convex combination of the two
//!   unit phasors.
//!
//! The probe is used as given, without PIE-style `|P|^2` normalisation.

use std::fmt;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{gradient_residual, CostFunctional, Transform};
use crate::error::{Error, Result};
use crate::forward::{intensity_stack, Dataset, Position};
use crate::grid::{crop_center, dft2, idft2, zero_pad_center, ComplexGrid, RealGrid};
use crate::metrics::{align_and_error, IlluminationMask};

pub const DEFAULT_WARMUP: usize = 100;
pub const DEFAULT_REFINEMENT: usize = 200;
pub const DEFAULT_REFINEMENT_MU: f64 = 0.1;
pub const SCHEME_COUNT: u8 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "with", rename_all = "snake_case")]
pub enum RuleVariant {
    GradientDescent(CostFunctional),
    FourierMix(Transform),
    ObjectMix(Transform),
}

impl RuleVariant {
    pub const AMPLITUDE_DESCENT: RuleVariant = RuleVariant::GradientDescent(CostFunctional::AMPLITUDE);

    pub fn name(&self) -> &'static str {
        match self {
            RuleVariant::GradientDescent(_) => "gradient_descent",
            RuleVariant::FourierMix(_) => "fourier_mix",
            RuleVariant::ObjectMix(_) => "object_mix",
        }
    }

    /// Identifier of the functional or transform the rule is parameterised by.
    pub fn functional_id(&self) -> String {
        match self {
            RuleVariant::GradientDescent(f) => f.id(),
            RuleVariant::FourierMix(t) | RuleVariant::ObjectMix(t) => t.id(),
        }
    }
}

impl fmt::Display for RuleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.functional_id())
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidArgument(format!("step size must lie in [0, 1], got {mu}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub id: u8,
    pub warmup_iterations: usize,
    pub refinement_rule: RuleVariant,
    pub mu: f64,
    pub refinement_iterations: usize,
}

impl SchemeSpec {
    /// Scheme `id` with `warmup` Error Reduction sweeps followed by `refinement`
    /// sweeps of its own rule at `mu = 0.1`.
    ///
    /// Scheme 1 is plain Error Reduction for the same total number of sweeps.
    pub fn from_id(id: u8, warmup: usize, refinement: usize) -> Result<Self> {
        use RuleVariant::*;
        use Transform as T;
        let mix_transforms = [T::ANSCOMBE, T::SQRT_PLUS_1, T::POW_07, T::Identity, T::LOG_HALF, T::LOG_1];
        let rule = match id {
            1 => {
                return Ok(SchemeSpec {
                    id,
                    warmup_iterations: warmup + refinement,
                    refinement_rule: RuleVariant::AMPLITUDE_DESCENT,
                    mu: 1.0,
                    refinement_iterations: 0,
                })
            }
            2 => GradientDescent(CostFunctional::Vst(T::SQRT)),
            3 => GradientDescent(CostFunctional::Vst(T::POW_07)),
            4 => GradientDescent(CostFunctional::Vst(T::POW_09)),
            5 => GradientDescent(CostFunctional::Vst(T::ANSCOMBE)),
            6 => GradientDescent(CostFunctional::Vst(T::SQRT_PLUS_1)),
            7 => GradientDescent(CostFunctional::Vst(T::LOG_HALF)),
            8 => GradientDescent(CostFunctional::Vst(T::LOG_1)),
            9..=14 => FourierMix(mix_transforms[(id - 9) as usize]),
            15..=20 => ObjectMix(mix_transforms[(id - 15) as usize]),
            _ => return Err(Error::UnknownScheme(id.to_string())),
        };
        Ok(SchemeSpec {
            id,
            warmup_iterations: warmup,
            refinement_rule: rule,
            mu: DEFAULT_REFINEMENT_MU,
            refinement_iterations: refinement,
        })
    }

    pub fn total_sweeps(&self) -> usize {
        self.warmup_iterations + self.refinement_iterations
    }
}

/// All twenty schemes with the default sweep counts.
pub fn scheme_registry() -> Vec<SchemeSpec> {
    (1..=SCHEME_COUNT)
        .map(|id| SchemeSpec::from_id(id, DEFAULT_WARMUP, DEFAULT_REFINEMENT).expect("registered id"))
        .collect()
}

/// Reference object and region used to score reconstructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub object: ComplexGrid,
    pub mask: IlluminationMask,
}

impl GroundTruth {
    pub fn error(&self, estimate: &ComplexGrid) -> Result<f64> {
        align_and_error(estimate, &self.object, &self.mask)
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionState {
    pub object: ComplexGrid,
    pub iteration: usize,
    pub error_log: Vec<(usize, f64)>,
    rng: ChaCha8Rng,
}

impl ReconstructionState {
    pub fn new(object: ComplexGrid, seed: u64) -> Self {
        Self { object, iteration: 0, error_log: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn log_error(&mut self, truth: &GroundTruth) -> Result<f64> {
        let e = truth.error(&self.object)?;
        self.error_log.push((self.iteration, e));
        Ok(e)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.error_log.last().map(|&(_, e)| e)
    }

    fn shuffled_order(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order
    }
}

/// Constant start whose modelled mean pattern energy matches the data.
pub fn constant_initial_guess(dataset: &Dataset) -> ComplexGrid {
    let mean_energy =
        dataset.patterns.iter().map(RealGrid::sum).sum::<f64>() / dataset.patterns.len() as f64;
    let probe_energy = dataset.probe.norm_sqr();
    let c = if mean_energy > 0.0 && probe_energy > 0.0 {
        (mean_energy / probe_energy).sqrt()
    } else {
        1.0
    };
    let (w, h) = dataset.geometry.object_dims();
    ComplexGrid::filled(w, h, Complex64::new(c, 0.0))
}

#[inline]
fn unit_phasor(v: Complex64) -> Complex64 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// `target * G / |G|`, with the phase factor taken as 1 where `G = 0`.
pub fn modulus_substitute(spectrum: &ComplexGrid, target_amplitude: &RealGrid) -> Result<ComplexGrid> {
    if spectrum.dims() != target_amplitude.dims() {
        return Err(Error::DimensionMismatch(format!(
            "spectrum {:?} vs amplitude {:?}",
            spectrum.dims(),
            target_amplitude.dims()
        )));
    }
    let (w, h) = spectrum.dims();
    let data = spectrum
        .data()
        .iter()
        .zip(target_amplitude.data())
        .map(|(&g, &a)| unit_phasor(g) * a)
        .collect();
    ComplexGrid::new(w, h, data)
}

/// One Error Reduction iterate: modulus substitution then support projection.
pub fn er_support_iterate(
    g: &ComplexGrid,
    support: &[bool],
    measured_amplitude: &RealGrid,
) -> Result<ComplexGrid> {
    if support.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "support of {} samples for a {}x{} field",
            support.len(),
            g.width(),
            g.height()
        )));
    }
    let mut out = idft2(&modulus_substitute(&dft2(g), measured_amplitude)?);
    for (v, &inside) in out.data_mut().iter_mut().zip(support) {
        if !inside {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

fn window_exit(object: &ComplexGrid, probe: &ComplexGrid, pos: Position) -> ComplexGrid {
    ComplexGrid::from_fn(probe.width(), probe.height(), |x, y| {
        object.get(pos.x + x, pos.y + y) * probe.get(x, y)
    })
}

fn far_field(exit: &ComplexGrid, oversampling: usize) -> Result<ComplexGrid> {
    Ok(dft2(&zero_pad_center(exit, oversampling)?))
}

fn near_field(spectrum: &ComplexGrid, window: (usize, usize)) -> Result<ComplexGrid> {
    crop_center(&idft2(spectrum), window.0, window.1)
}

/// Steepest-descent direction `dL/dg*` on the window for one position.
fn descent_direction(
    object: &ComplexGrid,
    probe: &ComplexGrid,
    pos: Position,
    target: &RealGrid,
    oversampling: usize,
    functional: &CostFunctional,
) -> Result<ComplexGrid> {
    let exit = window_exit(object, probe, pos);
    let spectrum = far_field(&exit, oversampling)?;
    let residual = gradient_residual(functional, &spectrum, target)?;
    near_field(&residual, probe.dims())
}

/// Exit wave after full modulus substitution against `target`.
fn projected_exit(
    exit: &ComplexGrid,
    target: &RealGrid,
    oversampling: usize,
) -> Result<ComplexGrid> {
    let spectrum = far_field(exit, oversampling)?;
    near_field(&modulus_substitute(&spectrum, &target.sqrt())?, exit.dims())
}

/// Applies one rule at one probe position, in place.
pub fn position_update(
    object: &mut ComplexGrid,
    probe: &ComplexGrid,
    pos: Position,
    target: &RealGrid,
    oversampling: usize,
    rule: &RuleVariant,
    mu: f64,
) -> Result<()> {
    check_mu(mu)?;
    let (pw, ph) = probe.dims();
    if pos.x + pw > object.width() || pos.y + ph > object.height() {
        return Err(Error::OutOfBounds {
            x: pos.x,
            y: pos.y,
            w: pw,
            h: ph,
            ow: object.width(),
            oh: object.height(),
        });
    }
    if target.dims() != (pw * oversampling, ph * oversampling) {
        return Err(Error::DimensionMismatch(format!(
            "target {:?} for a {pw}x{ph} window at oversampling {oversampling}",
            target.dims()
        )));
    }
    match rule {
        RuleVariant::GradientDescent(functional) => {
            if mu == 0.0 {
                return Ok(());
            }
            let d = descent_direction(object, probe, pos, target, oversampling, functional)?;
            for y in 0..ph {
                for x in 0..pw {
                    let p = probe.get(x, y);
                    let o = object.get(pos.x + x, pos.y + y);
                    object.set(pos.x + x, pos.y + y, o - mu * p.conj() * d.get(x, y));
                }
            }
        }
        RuleVariant::FourierMix(t) => {
            if mu == 0.0 {
                return Ok(());
            }
            let exit = window_exit(object, probe, pos);
            let spectrum = far_field(&exit, oversampling)?;
            let (sw, sh) = spectrum.dims();
            let mixed = ComplexGrid::from_fn(sw, sh, |u, v| {
                let g = spectrum.get(u, v);
                let amp = t.mix(g.norm_sqr(), target.get(u, v), mu).sqrt();
                unit_phasor(g) * amp
            });
            let new_exit = near_field(&mixed, (pw, ph))?;
            for y in 0..ph {
                for x in 0..pw {
                    let p = probe.get(x, y);
                    let o = object.get(pos.x + x, pos.y + y);
                    object.set(pos.x + x, pos.y + y, o + p.conj() * (new_exit.get(x, y) - exit.get(x, y)));
                }
            }
        }
        RuleVariant::ObjectMix(t) => {
            if mu == 0.0 {
                return Ok(());
            }
            let exit = window_exit(object, probe, pos);
            let projected = projected_exit(&exit, target, oversampling)?;
            for y in 0..ph {
                for x in 0..pw {
                    let p = probe.get(x, y);
                    if p == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let o = object.get(pos.x + x, pos.y + y);
                    let o_full = o + p.conj() * (projected.get(x, y) - exit.get(x, y));
                    let next = if mu == 1.0 {
                        o_full
                    } else {
                        let amp = t.mix(o.norm(), o_full.norm(), mu);
                        let phasor = unit_phasor_or(
                            (1.0 - mu) * unit_phasor(o) + mu * unit_phasor(o_full),
                            unit_phasor(o),
                        );
                        phasor * amp
                    };
                    object.set(pos.x + x, pos.y + y, next);
                }
            }
        }
    }
    Ok(())
}

#[inline]
fn unit_phasor_or(v: Complex64, fallback: Complex64) -> Complex64 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        fallback
    }
}

fn check_state(state: &ReconstructionState, dataset: &Dataset) -> Result<()> {
    if state.object.dims() != dataset.geometry.object_dims() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {:?}, dataset object is {:?}",
            state.object.dims(),
            dataset.geometry.object_dims()
        )));
    }
    Ok(())
}

fn check_finite(state: &ReconstructionState) -> Result<()> {
    if !state.object.is_finite() {
        return Err(Error::NonFinite(format!("object estimate after sweep {}", state.iteration)));
    }
    Ok(())
}

/// One sweep over all positions in a freshly shuffled order, using `targets`
/// in place of the measured patterns.
pub fn sweep_against(
    state: &mut ReconstructionState,
    dataset: &Dataset,
    targets: &[RealGrid],
    rule: &RuleVariant,
    mu: f64,
) -> Result<()> {
    check_state(state, dataset)?;
    if targets.len() != dataset.geometry.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} positions",
            targets.len(),
            dataset.geometry.len()
        )));
    }
    let order = state.shuffled_order(targets.len());
    for j in order {
        let pos = dataset.geometry.positions()[j];
        position_update(
            &mut state.object,
            &dataset.probe,
            pos,
            &targets[j],
            dataset.oversampling,
            rule,
            mu,
        )
        .map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFinite(format!("object estimate during sweep {}", state.iteration + 1)),
            other => other,
        })?;
    }
    state.iteration += 1;
    check_finite(state)
}

/// One sequential sweep over the measured patterns.
pub fn position_sweep(
    state: &mut ReconstructionState,
    dataset: &Dataset,
    rule: &RuleVariant,
    mu: f64,
) -> Result<()> {
    sweep_against(state, dataset, &dataset.patterns, rule, mu)
}

/// One simultaneous update `O <- O - mu sum_X P*(x - X) d(x, X)`, all
/// directions evaluated at the current estimate.
pub fn global_gradient_step(
    state: &mut ReconstructionState,
    dataset: &Dataset,
    functional: &CostFunctional,
    mu: f64,
) -> Result<()> {
    check_mu(mu)?;
    check_state(state, dataset)?;
    let (ow, oh) = state.object.dims();
    let probe = &dataset.probe;
    let (pw, ph) = probe.dims();
    let mut acc = ComplexGrid::zeros(ow, oh);
    for (pos, y) in dataset.geometry.positions().iter().zip(&dataset.patterns) {
        let d = descent_direction(&state.object, probe, *pos, y, dataset.oversampling, functional)?;
        for yy in 0..ph {
            for xx in 0..pw {
                let (ax, ay) = (pos.x + xx, pos.y + yy);
                acc.set(ax, ay, acc.get(ax, ay) + probe.get(xx, yy).conj() * d.get(xx, yy));
            }
        }
    }
    for (o, a) in state.object.data_mut().iter_mut().zip(acc.data()) {
        *o -= mu * a;
    }
    state.iteration += 1;
    check_finite(state)
}

fn log_if(state: &mut ReconstructionState, truth: Option<&GroundTruth>) -> Result<()> {
    if let Some(t) = truth {
        state.log_error(t)?;
    }
    Ok(())
}

/// Runs a benchmark scheme from `init_object`, logging the error after every
/// sweep when `truth` is given.
pub fn run_scheme(
    scheme: &SchemeSpec,
    dataset: &Dataset,
    init_object: &ComplexGrid,
    truth: Option<&GroundTruth>,
    seed: u64,
) -> Result<ReconstructionState> {
    check_mu(scheme.mu)?;
    let mut state = ReconstructionState::new(init_object.clone(), seed);
    check_state(&state, dataset)?;
    for _ in 0..scheme.warmup_iterations {
        position_sweep(&mut state, dataset, &RuleVariant::AMPLITUDE_DESCENT, 1.0)?;
        log_if(&mut state, truth)?;
    }
    for _ in 0..scheme.refinement_iterations {
        position_sweep(&mut state, dataset, &scheme.refinement_rule, scheme.mu)?;
        log_if(&mut state, truth)?;
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// Step size of the target update `m <- (1 - mu_c) m + mu_c z0`.
    pub mu_c: f64,
    pub inner_sweeps: usize,
    pub outer_rounds: usize,
    pub inner_rule: RuleVariant,
    pub inner_mu: f64,
    /// Error Reduction sweeps against the raw data before the first round.
    pub warmup_sweeps: usize,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            mu_c: 0.1,
            inner_sweeps: 5,
            outer_rounds: 40,
            inner_rule: RuleVariant::AMPLITUDE_DESCENT,
            inner_mu: 1.0,
            warmup_sweeps: DEFAULT_WARMUP,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu_c) {
            return Err(Error::Config(format!("mu_c must lie in [0, 1], got {}", self.mu_c)));
        }
        if self.inner_sweeps == 0 || self.outer_rounds == 0 {
            return Err(Error::Config("inner_sweeps and outer_rounds must be positive".into()));
        }
        check_mu(self.inner_mu).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn total_sweeps(&self) -> usize {
        self.warmup_sweeps + self.inner_sweeps * self.outer_rounds
    }
}

/// Reconstruction with slowly adapted intensity targets, starting from the
/// measured data. Returns the final state and targets.
pub fn adapt_constraints(
    dataset: &Dataset,
    config: &AdapterConfig,
    init_object: &ComplexGrid,
    truth: Option<&GroundTruth>,
    seed: u64,
) -> Result<(ReconstructionState, Vec<RealGrid>)> {
    config.validate()?;
    let mut state = ReconstructionState::new(init_object.clone(), seed);
    check_state(&state, dataset)?;
    for _ in 0..config.warmup_sweeps {
        position_sweep(&mut state, dataset, &RuleVariant::AMPLITUDE_DESCENT, 1.0)?;
        log_if(&mut state, truth)?;
    }
    let mut targets = dataset.patterns.clone();
    for _ in 0..config.outer_rounds {
        for _ in 0..config.inner_sweeps {
            sweep_against(&mut state, dataset, &targets, &config.inner_rule, config.inner_mu)?;
            log_if(&mut state, truth)?;
        }
        if config.mu_c > 0.0 {
            let z0 = intensity_stack(&state.object, &dataset.probe, &dataset.geometry, dataset.oversampling)?;
            let mu_c = config.mu_c;
            targets = targets
                .iter()
                .zip(&z0)
                .map(|(m, z)| m.zip_map(z, |m, z| ((1.0 - mu_c) * m + mu_c * z).max(0.0)))
                .collect();
        }
    }
    Ok((state, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::cost_eval;
    use crate::forward::{make_probe, raster_positions, simulate, Mode, ProbeKind, ScanGeometry};
    use crate::testutil::{poisson_target, random_grid};

    fn toy_dataset(seed: u64, oversampling: usize) -> (ComplexGrid, Dataset) {
        let object = random_grid(24, 24, seed);
        let probe = make_probe(ProbeKind::Tophat, 3.5, (12, 12)).unwrap();
        let geom = raster_positions((24, 24), (12, 12), 4, 1, seed).unwrap();
        let ds = simulate(&object, &probe, &geom, Mode::RealSpace, oversampling).unwrap();
        (object, ds)
    }

    fn noisy(ds: &Dataset, seed: u64) -> Dataset {
        let scaled = crate::noise::scale_to_budget(&ds.patterns, crate::noise::PhotonBudget::new(1e4).unwrap())
            .unwrap();
        ds.with_patterns(crate::noise::sample_poisson(&scaled, seed).unwrap()).unwrap()
    }

    fn all_rules() -> Vec<RuleVariant> {
        let mut rules: Vec<RuleVariant> =
            CostFunctional::registered().into_iter().map(RuleVariant::GradientDescent).collect();
        for t in Transform::REGISTERED {
            rules.push(RuleVariant::FourierMix(t));
            rules.push(RuleVariant::ObjectMix(t));
        }
        rules
    }

    #[test]
    fn modulus_substitute_examples() {
        let g = random_grid(16, 16, 1);
        let out = modulus_substitute(&g, &g.intensity().sqrt()).unwrap();
        assert!(out.max_abs_diff(&g) < 1e-15);

        let g2 = ComplexGrid::filled(1, 1, Complex64::new(2.0, 0.0));
        let out = modulus_substitute(&g2, &RealGrid::filled(1, 1, 3.0)).unwrap();
        assert_eq!(out.get(0, 0), Complex64::new(3.0, 0.0));

        let target = poisson_target(16, 16, 2).sqrt();
        let out = modulus_substitute(&g, &target).unwrap();
        for ((o, gv), t) in out.data().iter().zip(g.data()).zip(target.data()) {
            assert!((o.norm() - t).abs() < 1e-12);
            if *t > 0.0 {
                assert!((o.arg() - gv.arg()).abs() < 1e-12);
            }
        }

        let zero = ComplexGrid::zeros(1, 1);
        let out = modulus_substitute(&zero, &RealGrid::filled(1, 1, 2.0)).unwrap();
        assert_eq!(out.get(0, 0), Complex64::new(2.0, 0.0));
    }

    #[test]
    fn error_reduction_iterate() {
        let support: Vec<bool> = (0..256).map(|i| (i % 16) < 8 && (i / 16) < 8).collect();
        let mut g = random_grid(16, 16, 3);
        for (v, &s) in g.data_mut().iter_mut().zip(&support) {
            if !s {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        let amp = dft2(&g).intensity().sqrt();
        let fixed = er_support_iterate(&g, &support, &amp).unwrap();
        assert!(fixed.max_abs_diff(&g) < 1e-10);

        let measured = poisson_target(16, 16, 4).sqrt();
        let amp_cost = |f: &ComplexGrid| -> f64 {
            dft2(f).data().iter().zip(measured.data()).map(|(g, m)| (g.norm() - m).powi(2)).sum()
        };
        let mut cur = g.clone();
        for _ in 0..20 {
            let next = er_support_iterate(&cur, &support, &measured).unwrap();
            for (v, &s) in next.data().iter().zip(&support) {
                if !s {
                    assert_eq!(*v, Complex64::new(0.0, 0.0));
                }
            }
            assert!(amp_cost(&next) <= amp_cost(&cur) * (1.0 + 1e-12));
            cur = next;
        }
        assert!(er_support_iterate(&g, &support[..10], &amp).is_err());
    }

    #[test]
    fn true_object_is_fixed_point_of_every_rule() {
        let (object, ds) = toy_dataset(5, 2);
        // The regularised log-likelihood is stationary only up to O(eps/|G|).
        let tight = CostFunctional::poisson_loglik_with(crate::cost::Epsilon::RelativeToMean(1e-13)).unwrap();
        let rules = all_rules().into_iter().map(|r| match r {
            RuleVariant::GradientDescent(CostFunctional::PoissonLogLikelihood { .. }) => {
                RuleVariant::GradientDescent(tight)
            }
            other => other,
        });
        for rule in rules {
            for mu in [0.1, 0.5, 1.0] {
                let mut state = ReconstructionState::new(object.clone(), 1);
                position_sweep(&mut state, &ds, &rule, mu).unwrap();
                let rel = state.object.max_abs_diff(&object);
                assert!(rel < 1e-8, "{rule} mu={mu}: {rel}");
            }
        }
    }

    #[test]
    fn zero_step_is_exact_identity() {
        let (_, ds) = toy_dataset(6, 1);
        let ds = noisy(&ds, 1);
        let start = random_grid(24, 24, 77);
        for rule in all_rules() {
            let mut state = ReconstructionState::new(start.clone(), 2);
            position_sweep(&mut state, &ds, &rule, 0.0).unwrap();
            assert_eq!(state.object, start, "{rule}");
        }
    }

    #[test]
    fn unit_step_mixes_are_transform_independent() {
        let (_, ds) = toy_dataset(7, 2);
        let ds = noisy(&ds, 2);
        let start = random_grid(24, 24, 78);
        let pos = ds.geometry.positions()[4];
        let run = |rule: RuleVariant| {
            let mut o = start.clone();
            position_update(&mut o, &ds.probe, pos, &ds.patterns[4], 2, &rule, 1.0).unwrap();
            o
        };
        let fm = run(RuleVariant::FourierMix(Transform::Identity));
        let om = run(RuleVariant::ObjectMix(Transform::Identity));
        let gd = run(RuleVariant::AMPLITUDE_DESCENT);
        for t in Transform::REGISTERED {
            assert!(run(RuleVariant::FourierMix(t)).max_abs_diff(&fm) < 1e-10);
            assert!(run(RuleVariant::ObjectMix(t)).max_abs_diff(&om) < 1e-10);
        }
        assert!(fm.max_abs_diff(&gd) < 1e-10);
        assert!(om.max_abs_diff(&gd) < 1e-10);
    }

    #[test]
    fn amplitude_sweep_matches_projection_update() {
        let (_, ds) = toy_dataset(8, 2);
        let ds = noisy(&ds, 3);
        let start = random_grid(24, 24, 79);
        let mut state = ReconstructionState::new(start.clone(), 5);
        position_sweep(&mut state, &ds, &RuleVariant::AMPLITUDE_DESCENT, 1.0).unwrap();

        // Replay with the same order, updating via explicit modulus substitution.
        let mut order: Vec<usize> = (0..ds.geometry.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
        let mut o = start;
        for j in order {
            let pos = ds.geometry.positions()[j];
            let exit = window_exit(&o, &ds.probe, pos);
            let spec = dft2(&zero_pad_center(&exit, 2).unwrap());
            let sub = modulus_substitute(&spec, &ds.patterns[j].sqrt()).unwrap();
            let g_prime = crop_center(&idft2(&sub), 12, 12).unwrap();
            for y in 0..12 {
                for x in 0..12 {
                    let v = o.get(pos.x + x, pos.y + y)
                        + ds.probe.get(x, y).conj() * (g_prime.get(x, y) - exit.get(x, y));
                    o.set(pos.x + x, pos.y + y, v);
                }
            }
        }
        assert!(state.object.max_abs_diff(&o) < 1e-10);
    }

    #[test]
    fn fourier_mix_at_unit_step_tracks_amplitude_descent() {
        let (_, ds) = toy_dataset(9, 1);
        let ds = noisy(&ds, 4);
        let start = random_grid(24, 24, 80);
        let mut a = ReconstructionState::new(start.clone(), 11);
        let mut b = ReconstructionState::new(start, 11);
        for _ in 0..3 {
            position_sweep(&mut a, &ds, &RuleVariant::FourierMix(Transform::Identity), 1.0).unwrap();
            position_sweep(&mut b, &ds, &RuleVariant::AMPLITUDE_DESCENT, 1.0).unwrap();
        }
        let rel = a.object.max_abs_diff(&b.object) / b.object.norm() * (b.object.len() as f64).sqrt();
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn global_step_single_position_equals_sweep() {
        let object = random_grid(12, 12, 10);
        let probe = make_probe(ProbeKind::Tophat, 4.0, (12, 12)).unwrap();
        let geom = ScanGeometry::new(vec![Position { x: 0, y: 0 }], (12, 12), (12, 12)).unwrap();
        let ds = noisy(&simulate(&object, &probe, &geom, Mode::RealSpace, 2).unwrap(), 5);
        let start = random_grid(12, 12, 81);
        for f in CostFunctional::registered() {
            let mut a = ReconstructionState::new(start.clone(), 1);
            let mut b = ReconstructionState::new(start.clone(), 1);
            global_gradient_step(&mut a, &ds, &f, 0.3).unwrap();
            position_sweep(&mut b, &ds, &RuleVariant::GradientDescent(f), 0.3).unwrap();
            assert!(a.object.max_abs_diff(&b.object) < 1e-12, "{f}");
        }
    }

    #[test]
    fn global_step_sums_windowed_contributions() {
        let object = random_grid(16, 12, 11);
        let probe = make_probe(ProbeKind::Gaussian, 3.0, (8, 8)).unwrap();
        let geom = ScanGeometry::new(
            vec![Position { x: 0, y: 2 }, Position { x: 5, y: 3 }],
            (8, 8),
            (16, 12),
        )
        .unwrap();
        let ds = noisy(&simulate(&object, &probe, &geom, Mode::RealSpace, 1).unwrap(), 6);
        let start = random_grid(16, 12, 82);
        let f = CostFunctional::Vst(Transform::ANSCOMBE);
        let mut state = ReconstructionState::new(start.clone(), 0);
        global_gradient_step(&mut state, &ds, &f, 0.5).unwrap();

        // Oracle: each contribution computed on its own, placed into a zero canvas.
        let mut expected = start.clone();
        for (pos, y) in geom.positions().iter().zip(&ds.patterns) {
            let mut canvas = ComplexGrid::zeros(16, 12);
            let exit = window_exit(&start, &probe, *pos);
            let r = gradient_residual(&f, &dft2(&exit), y).unwrap();
            let d = idft2(&r);
            for yy in 0..8 {
                for xx in 0..8 {
                    canvas.set(pos.x + xx, pos.y + yy, probe.get(xx, yy).conj() * d.get(xx, yy));
                }
            }
            for (e, c) in expected.data_mut().iter_mut().zip(canvas.data()) {
                *e -= 0.5 * c;
            }
        }
        assert!(state.object.max_abs_diff(&expected) < 1e-12);

        let (truth, clean) = toy_dataset(12, 1);
        let mut s = ReconstructionState::new(truth.clone(), 0);
        global_gradient_step(&mut s, &clean, &CostFunctional::AMPLITUDE, 1.0).unwrap();
        assert!(s.object.max_abs_diff(&truth) < 1e-8);
    }

    #[test]
    fn small_steps_decrease_the_global_cost() {
        let (_, ds) = toy_dataset(13, 2);
        let ds = noisy(&ds, 7);
        let start = constant_initial_guess(&ds);
        let f = CostFunctional::AMPLITUDE;
        let cost = |o: &ComplexGrid| {
            let z = intensity_stack(o, &ds.probe, &ds.geometry, 2).unwrap();
            cost_eval(&f, &z, &ds.patterns).unwrap()
        };
        let mut state = ReconstructionState::new(start, 0);
        let mut prev = cost(&state.object);
        for _ in 0..5 {
            global_gradient_step(&mut state, &ds, &f, 0.05).unwrap();
            let c = cost(&state.object);
            assert!(c < prev);
            prev = c;
        }
    }

    #[test]
    fn registry_matches_scheme_table() {
        let reg = scheme_registry();
        assert_eq!(reg.len(), 20);
        assert_eq!(reg[0].refinement_iterations, 0);
        assert_eq!(reg[0].mu, 1.0);
        assert_eq!(reg[0].refinement_rule, RuleVariant::AMPLITUDE_DESCENT);
        assert_eq!(reg[1].refinement_rule, RuleVariant::AMPLITUDE_DESCENT);
        assert_eq!(reg[1].mu, 0.1);
        let ids: Vec<String> = reg.iter().map(|s| s.refinement_rule.functional_id()).collect();
        let expected = [
            "sqrt", "sqrt", "pow_0.7", "pow_0.9", "anscombe", "sqrt_plus_1", "log_half", "log_1",
            "anscombe", "sqrt_plus_1", "pow_0.7", "identity", "log_half", "log_1",
            "anscombe", "sqrt_plus_1", "pow_0.7", "identity", "log_half", "log_1",
        ];
        assert_eq!(ids, expected);
        for s in &reg[1..] {
            assert_eq!((s.warmup_iterations, s.mu), (100, 0.1));
        }
        for s in &reg[8..14] {
            assert_eq!(s.refinement_rule.name(), "fourier_mix");
        }
        for s in &reg[14..] {
            assert_eq!(s.refinement_rule.name(), "object_mix");
        }
        assert!(matches!(SchemeSpec::from_id(0, 1, 1), Err(Error::UnknownScheme(_))));
        assert!(matches!(SchemeSpec::from_id(21, 1, 1), Err(Error::UnknownScheme(_))));
    }

    #[test]
    fn run_scheme_is_deterministic() {
        let (object, ds) = toy_dataset(14, 1);
        let ds = noisy(&ds, 8);
        let mask = crate::metrics::illumination_mask(&ds.probe, &ds.geometry, 0.1).unwrap();
        let truth = GroundTruth { object, mask };
        let scheme = SchemeSpec::from_id(9, 3, 4).unwrap();
        let init = constant_initial_guess(&ds);
        let a = run_scheme(&scheme, &ds, &init, Some(&truth), 3).unwrap();
        let b = run_scheme(&scheme, &ds, &init, Some(&truth), 3).unwrap();
        assert_eq!(a.error_log, b.error_log);
        assert_eq!(a.error_log.len(), 7);
        assert_eq!(a.iteration, 7);
        assert!(a.error_log.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn adapter_with_frozen_targets_is_baseline() {
        let (object, ds) = toy_dataset(15, 1);
        let ds = noisy(&ds, 9);
        let mask = crate::metrics::illumination_mask(&ds.probe, &ds.geometry, 0.1).unwrap();
        let truth = GroundTruth { object, mask };
        let init = constant_initial_guess(&ds);
        let config = AdapterConfig { mu_c: 0.0, inner_sweeps: 2, outer_rounds: 3, warmup_sweeps: 2, ..Default::default() };
        let (state, targets) = adapt_constraints(&ds, &config, &init, Some(&truth), 4).unwrap();
        assert_eq!(targets, ds.patterns);
        let baseline = run_scheme(&SchemeSpec::from_id(1, 2, 6).unwrap(), &ds, &init, Some(&truth), 4).unwrap();
        assert_eq!(state.object, baseline.object);
        assert_eq!(state.error_log, baseline.error_log);
    }

    #[test]
    fn adapter_keeps_noise_free_targets_at_fixed_point() {
        let (object, ds) = toy_dataset(16, 2);
        let config = AdapterConfig { inner_sweeps: 1, outer_rounds: 3, warmup_sweeps: 0, ..Default::default() };
        let (_, targets) = adapt_constraints(&ds, &config, &object, None, 1).unwrap();
        for (t, y) in targets.iter().zip(&ds.patterns) {
            for (a, b) in t.data().iter().zip(y.data()) {
                assert!((a - b).abs() <= 1e-10 * b.max(1.0));
            }
        }
    }

    #[test]
    fn adapter_targets_stay_nonnegative() {
        for seed in 0..3 {
            let (_, ds) = toy_dataset(20 + seed, 1);
            let ds = noisy(&ds, seed);
            let config = AdapterConfig { mu_c: 0.5, inner_sweeps: 1, outer_rounds: 4, warmup_sweeps: 1, ..Default::default() };
            let (_, targets) = adapt_constraints(&ds, &config, &constant_initial_guess(&ds), None, seed).unwrap();
            assert!(targets.iter().all(|t| t.data().iter().all(|&v| v >= 0.0)));
        }
    }

    #[test]
    fn adapter_config_validation() {
        let bad = AdapterConfig { mu_c: 1.5, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = AdapterConfig { inner_sweeps: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!(AdapterConfig::default().total_sweeps(), 300);
    }

    #[test]
    fn shape_errors_propagate() {
        let (_, ds) = toy_dataset(17, 1);
        let mut state = ReconstructionState::new(ComplexGrid::zeros(10, 10), 0);
        assert!(matches!(
            position_sweep(&mut state, &ds, &RuleVariant::AMPLITUDE_DESCENT, 1.0),
            Err(Error::DimensionMismatch(_))
        ));
        let mut state = ReconstructionState::new(ComplexGrid::zeros(24, 24), 0);
        assert!(position_sweep(&mut state, &ds, &RuleVariant::AMPLITUDE_DESCENT, 1.5).is_err());
    }
}
