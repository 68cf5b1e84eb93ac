//! Benchmark plants, fixed-step RK4 integration, excitation signals, and
//! sampled trajectory datasets.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The continuous-time plants the crate knows how to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    VanDerPol,
    Duffing,
    /// Arbitrary linear plant `xdot = A x + B u`, used by exact-recovery
    /// oracle tests (a fitted predictor can match it to solver precision).
    LinearTest,
}

/// A plant: kind, named real parameters, and state/input dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub kind: PlantKind,
    pub params: BTreeMap<String, f64>,
    pub n_x: usize,
    pub n_u: usize,
}

impl PlantSpec {
    /// Forced Van der Pol oscillator: `x1' = x2`,
    /// `x2' = mu (1 - x1^2) x2 - omega0^2 x1 + u`.
    pub fn van_der_pol(mu: f64, omega0: f64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("mu".into(), mu);
        params.insert("omega0".into(), omega0);
        PlantSpec {
            kind: PlantKind::VanDerPol,
            params,
            n_x: 2,
            n_u: 1,
        }
    }

    /// Forced Duffing oscillator: `x1' = x2`,
    /// `x2' = -delta x2 - alpha x1 - beta x1^3 + u`.
    pub fn duffing(delta: f64, alpha: f64, beta: f64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("delta".into(), delta);
        params.insert("alpha".into(), alpha);
        params.insert("beta".into(), beta);
        PlantSpec {
            kind: PlantKind::Duffing,
            params,
            n_x: 2,
            n_u: 1,
        }
    }

    /// Linear plant `xdot = A x + B u` with dense `A` (n_x by n_x) and `B`
    /// (n_x by n_u) stored entrywise as `a_<i>_<j>` / `b_<i>_<j>`.
    pub fn linear_test(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::contract(format!(
                "linear_test expects square A and conforming B, got {}x{} and {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let mut params = BTreeMap::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                params.insert(format!("a_{i}_{j}"), a[(i, j)]);
            }
            for j in 0..b.ncols() {
                params.insert(format!("b_{i}_{j}"), b[(i, j)]);
            }
        }
        let spec = PlantSpec {
            kind: PlantKind::LinearTest,
            params,
            n_x: a.nrows(),
            n_u: b.ncols(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_u == 0 {
            return Err(Error::contract("plant dimensions must be positive"));
        }
        if matches!(self.kind, PlantKind::VanDerPol | PlantKind::Duffing)
            && (self.n_x != 2 || self.n_u != 1)
        {
            return Err(Error::contract("oscillator plants require n_x = 2, n_u = 1"));
        }
        if let Some((k, v)) = self.params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::contract(format!("plant parameter {k} = {v} is not finite")));
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::contract(format!("missing plant parameter {name}")))
    }
}

/// Evaluate the plant's vector field `xdot = f(x, u)`.
pub fn plant_derivative(plant: &PlantSpec, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != plant.n_x || u.len() != plant.n_u {
        return Err(Error::contract(format!(
            "derivative called with |x| = {}, |u| = {} for a plant with n_x = {}, n_u = {}",
            x.len(),
            u.len(),
            plant.n_x,
            plant.n_u
        )));
    }
    match plant.kind {
        PlantKind::VanDerPol => {
            let mu = plant.param("mu")?;
            let omega0 = plant.param("omega0")?;
            Ok(DVector::from_vec(vec![
                x[1],
                mu * (1.0 - x[0] * x[0]) * x[1] - omega0 * omega0 * x[0] + u[0],
            ]))
        }
        PlantKind::Duffing => {
            let delta = plant.param("delta")?;
            let alpha = plant.param("alpha")?;
            let beta = plant.param("beta")?;
            Ok(DVector::from_vec(vec![
                x[1],
                -delta * x[1] - alpha * x[0] - beta * x[0] * x[0] * x[0] + u[0],
            ]))
        }
        PlantKind::LinearTest => {
            let mut dx = DVector::zeros(plant.n_x);
            for i in 0..plant.n_x {
                let mut acc = 0.0;
                for j in 0..plant.n_x {
                    acc += plant.param(&format!("a_{i}_{j}"))? * x[j];
                }
                for j in 0..plant.n_u {
                    acc += plant.param(&format!("b_{i}_{j}"))? * u[j];
                }
                dx[i] = acc;
            }
            Ok(dx)
        }
    }
}

/// One classical fourth-order Runge-Kutta step with the input held constant
/// (zero-order hold) over the step.
pub fn rk4_step(plant: &PlantSpec, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(Error::contract(format!("rk4 step size must be positive, got {h}")));
    }
    let k1 = plant_derivative(plant, x, u)?;
    let k2 = plant_derivative(plant, &(x + &k1 * (h / 2.0)), u)?;
    let k3 = plant_derivative(plant, &(x + &k2 * (h / 2.0)), u)?;
    let k4 = plant_derivative(plant, &(x + &k3 * h), u)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationOverflow { trajectory: None });
    }
    Ok(next)
}

/// Pseudo-random binary excitation: every component of every entry is
/// independently `+amp` or `-amp` with probability 1/2.
pub fn prbs_sequence(length: usize, n_u: usize, amp: f64, rng: &mut impl Rng) -> Result<Vec<DVector<f64>>> {
    if !(amp >= 0.0) {
        return Err(Error::contract(format!("prbs amplitude must be nonnegative, got {amp}")));
    }
    Ok((0..length)
        .map(|_| DVector::from_fn(n_u, |_, _| if rng.gen::<bool>() { amp } else { -amp }))
        .collect())
}

/// How to sample a batch of short excitation trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Steps per trajectory (each trajectory carries `horizon + 1` states).
    pub horizon: usize,
    /// Sampling period in seconds.
    pub step_size: f64,
    pub num_trajectories: usize,
    /// Per-coordinate `[lo, hi]` interval the initial state is drawn from.
    pub init_box: Vec<[f64; 2]>,
    /// PRBS amplitude.
    pub input_amp: f64,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn validate(&self, n_x: usize) -> Result<()> {
        if self.horizon == 0 || self.num_trajectories == 0 {
            return Err(Error::contract("horizon and num_trajectories must be >= 1"));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::contract("step_size must be positive"));
        }
        if self.init_box.len() != n_x {
            return Err(Error::contract(format!(
                "init_box has {} coordinates, plant has {}",
                self.init_box.len(),
                n_x
            )));
        }
        if self.init_box.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::contract("init_box requires lo < hi in every coordinate"));
        }
        if !(self.input_amp >= 0.0) {
            return Err(Error::contract("input_amp must be nonnegative"));
        }
        Ok(())
    }
}

/// A batch of sampled trajectories: per trajectory `horizon + 1` states and
/// `horizon` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub states: Vec<Vec<DVector<f64>>>,
    pub controls: Vec<Vec<DVector<f64>>>,
    pub plant: Option<PlantSpec>,
    pub sampling: Option<SamplingSpec>,
}

impl TrajectoryDataset {
    pub fn from_parts(states: Vec<Vec<DVector<f64>>>, controls: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        let ds = TrajectoryDataset {
            states,
            controls,
            plant: None,
            sampling: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn num_trajectories(&self) -> usize {
        self.states.len()
    }

    /// Steps per trajectory (states per trajectory minus one).
    pub fn horizon(&self) -> usize {
        self.states.first().map_or(0, |s| s.len() - 1)
    }

    pub fn n_x(&self) -> usize {
        self.states.first().and_then(|s| s.first()).map_or(0, |x| x.len())
    }

    pub fn n_u(&self) -> usize {
        self.controls.first().and_then(|u| u.first()).map_or(0, |u| u.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() || self.states.len() != self.controls.len() {
            return Err(Error::contract("dataset needs matching, nonempty state/control lists"));
        }
        let h = self.horizon();
        if h == 0 {
            return Err(Error::contract("trajectories must contain at least one step"));
        }
        let (n_x, n_u) = (self.n_x(), self.n_u());
        for (j, (xs, us)) in self.states.iter().zip(&self.controls).enumerate() {
            if xs.len() != h + 1 || us.len() != h {
                return Err(Error::contract(format!(
                    "trajectory {j}: expected {} states and {} controls, got {} and {}",
                    h + 1,
                    h,
                    xs.len(),
                    us.len()
                )));
            }
            if xs.iter().any(|x| x.len() != n_x) || us.iter().any(|u| u.len() != n_u) {
                return Err(Error::contract(format!("trajectory {j}: inconsistent dimensions")));
            }
            if xs.iter().flatten().any(|v| !v.is_finite()) || us.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::contract(format!("trajectory {j}: non-finite entry")));
            }
        }
        Ok(())
    }

    /// Concatenate two datasets sampled from compatible plants.
    pub fn concat(mut self, other: TrajectoryDataset) -> Result<Self> {
        if self.horizon() != other.horizon() || self.n_x() != other.n_x() || self.n_u() != other.n_u() {
            return Err(Error::contract("cannot concatenate datasets with different shapes"));
        }
        self.states.extend(other.states);
        self.controls.extend(other.controls);
        Ok(self)
    }

    /// Write the dataset as CSV (`traj,step,x1..xn,u1..um`). Control columns
    /// are left empty on the final step of each trajectory. Values carry 17
    /// significant digits so the file round-trips losslessly.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        let (n_x, n_u) = (self.n_x(), self.n_u());
        write!(w, "traj,step")?;
        for i in 1..=n_x {
            write!(w, ",x{i}")?;
        }
        for i in 1..=n_u {
            write!(w, ",u{i}")?;
        }
        writeln!(w)?;
        for (j, (xs, us)) in self.states.iter().zip(&self.controls).enumerate() {
            for (k, x) in xs.iter().enumerate() {
                write!(w, "{j},{k}")?;
                for v in x.iter() {
                    write!(w, ",{v:.16e}")?;
                }
                if k < us.len() {
                    for v in us[k].iter() {
                        write!(w, ",{v:.16e}")?;
                    }
                } else {
                    for _ in 0..n_u {
                        write!(w, ",")?;
                    }
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read a dataset written by [`TrajectoryDataset::save_csv`]. Plant and
    /// sampling metadata are not stored in the CSV; the caller reattaches
    /// them if needed.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        let n_x = headers.iter().filter(|h| h.starts_with('x')).count();
        let n_u = headers.iter().filter(|h| h.starts_with('u')).count();
        if n_x == 0 || headers.len() != 2 + n_x + n_u {
            return Err(Error::Parse("dataset CSV header must be traj,step,x...,u...".into()));
        }
        let mut states: Vec<Vec<DVector<f64>>> = Vec::new();
        let mut controls: Vec<Vec<DVector<f64>>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let traj: usize = parse_field(&record, 0)?;
            let step: usize = parse_field(&record, 1)?;
            if traj == states.len() && step == 0 {
                states.push(Vec::new());
                controls.push(Vec::new());
            }
            if traj + 1 != states.len() || step != states[traj].len() {
                return Err(Error::Parse(format!(
                    "dataset CSV rows out of order at traj {traj}, step {step}"
                )));
            }
            let mut x = DVector::zeros(n_x);
            for i in 0..n_x {
                x[i] = parse_field(&record, 2 + i)?;
            }
            states[traj].push(x);
            let u_fields: Vec<&str> = (0..n_u).map(|i| record.get(2 + n_x + i).unwrap_or("")).collect();
            if u_fields.iter().all(|f| f.is_empty()) {
                continue; // final step of a trajectory
            }
            let mut u = DVector::zeros(n_u);
            for (i, f) in u_fields.iter().enumerate() {
                u[i] = f
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad control value {f:?}: {e}")))?;
            }
            controls[traj].push(u);
        }
        let ds = TrajectoryDataset {
            states,
            controls,
            plant: None,
            sampling: None,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let field = record
        .get(idx)
        .ok_or_else(|| Error::Parse(format!("missing CSV field {idx}")))?;
    field
        .parse()
        .map_err(|e| Error::Parse(format!("bad CSV field {field:?}: {e}")))
}

/// Simulate one trajectory with its own RNG substream so results do not
/// depend on execution order.
fn simulate_trajectory(
    plant: &PlantSpec,
    spec: &SamplingSpec,
    index: usize,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(index as u64));
    let x0 = DVector::from_fn(spec.init_box.len(), |i, _| {
        let [lo, hi] = spec.init_box[i];
        rng.gen_range(lo..hi)
    });
    let controls = prbs_sequence(spec.horizon, plant.n_u, spec.input_amp, &mut rng)?;
    let mut states = Vec::with_capacity(spec.horizon + 1);
    states.push(x0);
    for u in &controls {
        let next = rk4_step(plant, states.last().unwrap(), u, spec.step_size).map_err(|e| match e {
            Error::IntegrationOverflow { .. } => Error::IntegrationOverflow {
                trajectory: Some(index),
            },
            other => other,
        })?;
        states.push(next);
    }
    Ok((states, controls))
}

/// Sample `num_trajectories` excitation trajectories. Deterministic in
/// `(plant, spec)` including the seed; trajectories are simulated in
/// parallel but each draws from its own substream, so the result is
/// identical to sequential execution.
pub fn generate_dataset(plant: &PlantSpec, spec: &SamplingSpec) -> Result<TrajectoryDataset> {
    plant.validate()?;
    spec.validate(plant.n_x)?;
    let results: Vec<Result<_>> = (0..spec.num_trajectories)
        .into_par_iter()
        .map(|j| simulate_trajectory(plant, spec, j))
        .collect();
    let mut states = Vec::with_capacity(spec.num_trajectories);
    let mut controls = Vec::with_capacity(spec.num_trajectories);
    for r in results {
        let (xs, us) = r?;
        states.push(xs);
        controls.push(us);
    }
    Ok(TrajectoryDataset {
        states,
        controls,
        plant: Some(plant.clone()),
        sampling: Some(spec.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vdp() -> PlantSpec {
        PlantSpec::van_der_pol(5.0, 0.8)
    }

    fn duffing() -> PlantSpec {
        PlantSpec::duffing(0.2, -1.0, 1.0)
    }

    #[test]
    fn origin_is_equilibrium_of_both_oscillators() {
        let x = DVector::zeros(2);
        let u = DVector::zeros(1);
        for plant in [vdp(), duffing()] {
            let dx = plant_derivative(&plant, &x, &u).unwrap();
            assert_eq!(dx, DVector::zeros(2));
        }
    }

    #[test]
    fn duffing_stable_equilibria() {
        let u = DVector::zeros(1);
        for x1 in [1.0, -1.0] {
            let dx = plant_derivative(&duffing(), &DVector::from_vec(vec![x1, 0.0]), &u).unwrap();
            assert_relative_eq!(dx[0], 0.0);
            assert_relative_eq!(dx[1], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn vdp_derivative_hand_value() {
        let dx = plant_derivative(
            &vdp(),
            &DVector::from_vec(vec![1.0, 1.0]),
            &DVector::zeros(1),
        )
        .unwrap();
        assert_relative_eq!(dx[0], 1.0);
        assert_relative_eq!(dx[1], -0.64, epsilon = 1e-15);
    }

    #[test]
    fn derivative_dimension_mismatch_is_contract_error() {
        let err = plant_derivative(&vdp(), &DVector::zeros(3), &DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        let plant = PlantSpec::linear_test(&a, &b).unwrap();
        let x1 = rk4_step(&plant, &DVector::from_element(1, 1.0), &DVector::zeros(1), 0.1).unwrap();
        assert_relative_eq!(x1[0], 0.90483742, epsilon = 1e-7);
    }

    #[test]
    fn rk4_preserves_equilibrium_exactly() {
        for h in [1e-3, 0.01, 0.5] {
            let x1 = rk4_step(&vdp(), &DVector::zeros(2), &DVector::zeros(1), h).unwrap();
            assert_eq!(x1, DVector::zeros(2));
        }
    }

    #[test]
    fn rk4_is_fourth_order_on_linear_decay() {
        // One-step error against the exact flow e^{-h}; halving h must shrink
        // it by at least 2^4 * 0.9 across a decade of step sizes.
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        let plant = PlantSpec::linear_test(&a, &b).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let u = DVector::zeros(1);
        let err_at = |h: f64| {
            let x1 = rk4_step(&plant, &x0, &u, h).unwrap();
            (x1[0] - (-h).exp()).abs()
        };
        let mut h = 0.4;
        while h > 0.04 {
            let ratio = err_at(h) / err_at(h / 2.0);
            assert!(ratio >= 16.0 * 0.9, "ratio {ratio} at h = {h}");
            h /= 2.0;
        }
    }

    #[test]
    fn prbs_entries_are_two_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for amp in [0.5, 1.0] {
            let seq = prbs_sequence(200, 1, amp, &mut rng).unwrap();
            assert!(seq.iter().all(|u| u[0] == amp || u[0] == -amp));
            assert!(seq.iter().any(|u| u[0] == amp) && seq.iter().any(|u| u[0] == -amp));
        }
        let zeros = prbs_sequence(50, 1, 0.0, &mut rng).unwrap();
        assert!(zeros.iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn prbs_mean_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(20240);
        for amp in [0.5, 2.0] {
            let seq = prbs_sequence(10_000, 1, amp, &mut rng).unwrap();
            let mean = seq.iter().map(|u| u[0]).sum::<f64>() / seq.len() as f64;
            assert!(mean.abs() <= 0.1 * amp, "mean {mean} for amp {amp}");
        }
    }

    fn small_spec() -> SamplingSpec {
        SamplingSpec {
            horizon: 20,
            step_size: 0.01,
            num_trajectories: 8,
            init_box: vec![[-2.0, 2.0], [-2.0, 2.0]],
            input_amp: 0.5,
            seed: 42,
        }
    }

    #[test]
    fn generate_dataset_shapes_and_determinism() {
        let ds = generate_dataset(&vdp(), &small_spec()).unwrap();
        assert_eq!(ds.num_trajectories(), 8);
        assert_eq!(ds.horizon(), 20);
        assert!(ds.states.iter().all(|s| s.len() == 21));
        assert!(ds.controls.iter().all(|u| u.len() == 20));
        let again = generate_dataset(&vdp(), &small_spec()).unwrap();
        assert_eq!(ds.states, again.states);
        assert_eq!(ds.controls, again.controls);
    }

    #[test]
    fn generate_dataset_minimal_shape() {
        let spec = SamplingSpec {
            horizon: 1,
            num_trajectories: 1,
            ..small_spec()
        };
        let ds = generate_dataset(&vdp(), &spec).unwrap();
        assert_eq!(ds.states[0].len(), 2);
        assert_eq!(ds.controls[0].len(), 1);
    }

    #[test]
    fn generate_matches_sequential_regardless_of_threads() {
        let ds = generate_dataset(&vdp(), &small_spec()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| generate_dataset(&vdp(), &small_spec()).unwrap());
        assert_eq!(ds, seq);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let ds = generate_dataset(&duffing(), &small_spec()).unwrap();
        let dir = std::env::temp_dir().join("koopman_core_dyn_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.csv");
        ds.save_csv(&path).unwrap();
        let loaded = TrajectoryDataset::load_csv(&path).unwrap();
        assert_eq!(ds.states, loaded.states);
        assert_eq!(ds.controls, loaded.controls);
    }

    #[test]
    fn integration_overflow_reports_trajectory() {
        // An unstable linear plant with a huge rate overflows quickly.
        let a = DMatrix::from_element(1, 1, 1e8);
        let b = DMatrix::from_element(1, 1, 0.0);
        let plant = PlantSpec::linear_test(&a, &b).unwrap();
        let spec = SamplingSpec {
            horizon: 50,
            step_size: 10.0,
            num_trajectories: 2,
            init_box: vec![[1.0, 2.0]],
            input_amp: 0.0,
            seed: 1,
        };
        match generate_dataset(&plant, &spec) {
            Err(Error::IntegrationOverflow { trajectory: Some(_) }) => {}
            other => panic!("expected integration overflow, got {other:?}"),
        }
    }
}
