//! Measurement tensors, response generation and the l1 normalization gate.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{CpFactors, DenseTensor, Shape};

/// Slack allowed on `||X||_1 <= 1`.
pub const L1_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub index: Vec<usize>,
    pub weight: f64,
}

/// A measurement tensor `X` with few nonzero cells.
///
/// Entries are kept sorted by flat offset with distinct indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMeasurement {
    shape: Shape,
    entries: Vec<Entry>,
}

impl SparseMeasurement {
    /// Builds a measurement, summing the weights of repeated indices.
    pub fn new(shape: Shape, entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<usize, Entry> = BTreeMap::new();
        for (index, weight) in entries {
            if !weight.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite weight {weight} at {index:?}"
                )));
            }
            let flat = shape.flat_index(&index)?;
            merged
                .entry(flat)
                .and_modify(|e| e.weight += weight)
                .or_insert(Entry { index, weight });
        }
        Ok(Self {
            shape,
            entries: merged.into_values().collect(),
        })
    }

    /// The element indicator `e_{j_1,...,j_K}`.
    pub fn indicator(shape: Shape, index: Vec<usize>) -> Result<Self> {
        shape.check_index(&index)?;
        Ok(Self {
            shape,
            entries: vec![Entry { index, weight: 1.0 }],
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.weight.abs()).sum()
    }

    /// True for a single cell with weight exactly 1.
    pub fn is_indicator(&self) -> bool {
        matches!(self.entries.as_slice(), [e] if e.weight == 1.0)
    }

    /// The mode-`k` index shared by every entry, if there is one.
    pub fn shared_mode_index(&self, k: usize) -> Option<usize> {
        let first = self.entries.first()?.index[k];
        self.entries
            .iter()
            .all(|e| e.index[k] == first)
            .then_some(first)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    index: e.index.clone(),
                    weight: e.weight * c,
                })
                .collect(),
        }
    }

    pub fn dot_dense(&self, a: &DenseTensor) -> Result<f64> {
        self.ensure_shape(a.shape())?;
        let values = a.values();
        Ok(self
            .entries
            .iter()
            .map(|e| e.weight * values[self.shape.flat_index_unchecked(&e.index)])
            .sum())
    }

    /// `<[[U]], X>` evaluated entry by entry.
    pub fn dot_cp(&self, factors: &CpFactors) -> Result<f64> {
        self.ensure_shape(factors.shape())?;
        Ok(self
            .entries
            .iter()
            .map(|e| e.weight * factors.element_unchecked(&e.index))
            .sum())
    }

    fn ensure_shape(&self, other: &Shape) -> Result<()> {
        if &self.shape != other {
            return Err(Error::Structural(format!(
                "measurement shape {} does not match tensor shape {other}",
                self.shape
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub x: SparseMeasurement,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignKind {
    /// Every measurement is a single cell with weight 1.
    ElementIndicator,
    /// Order-3 measurements supported on one `(s, t, :)` fiber.
    TaskSlice,
    GenericSparse,
}

impl DesignKind {
    pub fn infer(shape: &Shape, xs: &[&SparseMeasurement]) -> Self {
        if xs.iter().all(|x| x.is_indicator()) {
            DesignKind::ElementIndicator
        } else if shape.order() == 3
            && xs
                .iter()
                .all(|x| x.shared_mode_index(0).is_some() && x.shared_mode_index(1).is_some())
        {
            DesignKind::TaskSlice
        } else {
            DesignKind::GenericSparse
        }
    }
}

/// Observed data `D_n = {(Y_i, X_i)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSet {
    shape: Shape,
    observations: Vec<Observation>,
    kind: DesignKind,
}

impl DesignSet {
    /// Validates shapes, finiteness and `||X_i||_1 <= 1`.
    pub fn new(shape: Shape, observations: Vec<Observation>) -> Result<Self> {
        for (i, obs) in observations.iter().enumerate() {
            if obs.x.shape() != &shape {
                return Err(Error::Structural(format!(
                    "observation {i} has shape {}, design has {shape}",
                    obs.x.shape()
                )));
            }
            if !obs.y.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "observation {i} has non-finite response {}",
                    obs.y
                )));
            }
            let norm = obs.x.l1_norm();
            if norm > 1.0 + L1_TOLERANCE {
                return Err(Error::L1Gate { norm });
            }
        }
        let xs: Vec<&SparseMeasurement> = observations.iter().map(|o| &o.x).collect();
        let kind = DesignKind::infer(&shape, &xs);
        Ok(Self {
            shape,
            observations,
            kind,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn responses(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.y)
    }
}

/// Gaussian noise level `sigma > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GatePolicy {
    #[default]
    Reject,
    Rescale,
}

/// A measurement that passed the l1 gate, with the factor applied to it.
/// Responses paired with it should be multiplied by `scale` as well.
#[derive(Clone, Debug, PartialEq)]
pub struct Gated {
    pub measurement: SparseMeasurement,
    pub scale: f64,
}

pub fn normalize_l1_gate(x: SparseMeasurement, policy: GatePolicy) -> Result<Gated> {
    let norm = x.l1_norm();
    if norm <= 1.0 {
        return Ok(Gated {
            measurement: x,
            scale: 1.0,
        });
    }
    match policy {
        GatePolicy::Reject => Err(Error::L1Gate { norm }),
        GatePolicy::Rescale => {
            let scale = 1.0 / norm;
            Ok(Gated {
                measurement: x.scaled(scale),
                scale,
            })
        }
    }
}

/// `n` element indicators drawn uniformly, with replacement, from all cells.
pub fn make_completion_design<R: Rng + ?Sized>(
    shape: &Shape,
    n: usize,
    rng: &mut R,
) -> Result<Vec<SparseMeasurement>> {
    if n == 0 {
        return Err(Error::InvalidArgument("completion design needs n >= 1".into()));
    }
    Ok((0..n)
        .map(|_| {
            let flat = rng.random_range(0..shape.len());
            SparseMeasurement {
                shape: shape.clone(),
                entries: vec![Entry {
                    index: shape.unravel(flat),
                    weight: 1.0,
                }],
            }
        })
        .collect())
}

/// One multi-task measurement: predictor vector `x` for task `(s, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskInput {
    pub s: usize,
    pub t: usize,
    pub predictor: Vec<f64>,
}

/// Measurements that place each predictor along mode 3 of slice `(s, t, :)`.
pub fn make_multitask_design(
    m1: usize,
    m2: usize,
    m3: usize,
    tasks: &[TaskInput],
    policy: GatePolicy,
) -> Result<Vec<Gated>> {
    let shape = Shape::new(vec![m1, m2, m3])?;
    tasks
        .iter()
        .map(|task| {
            if task.predictor.len() != m3 {
                return Err(Error::Structural(format!(
                    "predictor has length {}, expected {m3}",
                    task.predictor.len()
                )));
            }
            let entries = task
                .predictor
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(j, &w)| (vec![task.s, task.t, j], w))
                .collect();
            normalize_l1_gate(SparseMeasurement::new(shape.clone(), entries)?, policy)
        })
        .collect()
}

/// Draws `y_i = <[[truth]], x_i> + eps_i` with `eps_i ~ N(0, sigma^2)`.
pub fn generate_responses<R: Rng + ?Sized>(
    truth: &CpFactors,
    xs: Vec<SparseMeasurement>,
    noise: NoiseSpec,
    rng: &mut R,
) -> Result<DesignSet> {
    let observations = xs
        .into_iter()
        .map(|x| {
            let signal = x.dot_cp(truth)?;
            let eps: f64 = rng.sample(StandardNormal);
            Ok(Observation {
                x,
                y: signal + noise.sigma * eps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DesignSet::new(truth.shape().clone(), observations)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn index_header(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("j{i}")).collect()
}

fn check_header(found: &csv::StringRecord, expected: &[String]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Parse(format!(
            "unexpected CSV header {found:?}, expected {expected:?}"
        )));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = record.get(i).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| Error::Parse(format!("cannot parse field {i} ({raw:?}) of CSV row")))
}

/// Writes single-entry measurements as `j1,...,jK,weight,y`.
pub fn write_observations_csv<W: Write>(writer: W, design: &DesignSet) -> Result<()> {
    let k = design.shape().order();
    let mut out = csv::Writer::from_writer(writer);
    let mut header = index_header(k);
    header.extend(["weight".to_string(), "y".to_string()]);
    out.write_record(&header)?;
    for (i, obs) in design.observations().iter().enumerate() {
        let [entry] = obs.x.entries() else {
            return Err(Error::InvalidArgument(format!(
                "observation {i} has {} entries; use the multi-entry format",
                obs.x.entries().len()
            )));
        };
        let mut row: Vec<String> = entry.index.iter().map(|j| j.to_string()).collect();
        row.push(fmt_f64(entry.weight));
        row.push(fmt_f64(obs.y));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the single-entry `j1,...,jK,weight,y` format.
pub fn read_observations_csv<R: Read>(
    reader: R,
    shape: &Shape,
    policy: GatePolicy,
) -> Result<DesignSet> {
    let k = shape.order();
    let mut input = csv::Reader::from_reader(reader);
    let mut expected = index_header(k);
    expected.extend(["weight".to_string(), "y".to_string()]);
    check_header(input.headers()?, &expected)?;
    let mut observations = Vec::new();
    for record in input.records() {
        let record = record?;
        let index = (0..k)
            .map(|i| parse_field(&record, i))
            .collect::<Result<Vec<usize>>>()?;
        let weight: f64 = parse_field(&record, k)?;
        let y: f64 = parse_field(&record, k + 1)?;
        let gated = normalize_l1_gate(SparseMeasurement::new(shape.clone(), vec![(index, weight)])?, policy)?;
        observations.push(Observation {
            x: gated.measurement,
            y: y * gated.scale,
        });
    }
    DesignSet::new(shape.clone(), observations)
}

/// Writes the multi-entry pair: `mid,j1,...,jK,weight` and `mid,y`.
pub fn write_multi_csv<W1: Write, W2: Write>(
    entries: W1,
    responses: W2,
    design: &DesignSet,
) -> Result<()> {
    let k = design.shape().order();
    let mut ew = csv::Writer::from_writer(entries);
    let mut rw = csv::Writer::from_writer(responses);
    let mut header = vec!["mid".to_string()];
    header.extend(index_header(k));
    header.push("weight".into());
    ew.write_record(&header)?;
    rw.write_record(["mid", "y"])?;
    for (mid, obs) in design.observations().iter().enumerate() {
        for entry in obs.x.entries() {
            let mut row = vec![mid.to_string()];
            row.extend(entry.index.iter().map(|j| j.to_string()));
            row.push(fmt_f64(entry.weight));
            ew.write_record(&row)?;
        }
        rw.write_record([mid.to_string(), fmt_f64(obs.y)])?;
    }
    ew.flush()?;
    rw.flush()?;
    Ok(())
}

/// Reads the multi-entry pair written by [`write_multi_csv`].
///
/// Measurement ids may be any non-negative integers; observations come out
/// in increasing id order. Every id in the response file needs at least one
/// entry and vice versa.
pub fn read_multi_csv<R1: Read, R2: Read>(
    entries: R1,
    responses: R2,
    shape: &Shape,
    policy: GatePolicy,
) -> Result<DesignSet> {
    let k = shape.order();
    let mut er = csv::Reader::from_reader(entries);
    let mut expected = vec!["mid".to_string()];
    expected.extend(index_header(k));
    expected.push("weight".into());
    check_header(er.headers()?, &expected)?;
    let mut grouped: BTreeMap<u64, Vec<(Vec<usize>, f64)>> = BTreeMap::new();
    for record in er.records() {
        let record = record?;
        let mid: u64 = parse_field(&record, 0)?;
        let index = (1..=k)
            .map(|i| parse_field(&record, i))
            .collect::<Result<Vec<usize>>>()?;
        let weight: f64 = parse_field(&record, k + 1)?;
        grouped.entry(mid).or_default().push((index, weight));
    }

    let mut rr = csv::Reader::from_reader(responses);
    check_header(rr.headers()?, &["mid".to_string(), "y".to_string()])?;
    let mut ys: BTreeMap<u64, f64> = BTreeMap::new();
    for record in rr.records() {
        let record = record?;
        let mid: u64 = parse_field(&record, 0)?;
        if ys.insert(mid, parse_field(&record, 1)?).is_some() {
            return Err(Error::Parse(format!("duplicate response for measurement {mid}")));
        }
    }
    if let Some(mid) = grouped.keys().find(|m| !ys.contains_key(m)) {
        return Err(Error::Parse(format!("measurement {mid} has no response")));
    }
    if let Some(mid) = ys.keys().find(|m| !grouped.contains_key(m)) {
        return Err(Error::Parse(format!("response {mid} has no entries")));
    }

    let observations = grouped
        .into_iter()
        .map(|(mid, entries)| {
            let gated = normalize_l1_gate(SparseMeasurement::new(shape.clone(), entries)?, policy)?;
            Ok(Observation {
                x: gated.measurement,
                y: ys[&mid] * gated.scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DesignSet::new(shape.clone(), observations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn completion_design_is_indicators() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let xs = make_completion_design(&shape(&[2, 2, 2]), 8, &mut rng).unwrap();
        assert_eq!(xs.len(), 8);
        assert!(xs.iter().all(|x| x.is_indicator() && x.l1_norm() == 1.0));
        assert_eq!(make_completion_design(&shape(&[2, 2, 2]), 1, &mut rng).unwrap().len(), 1);
        assert!(make_completion_design(&shape(&[2, 2, 2]), 0, &mut rng).is_err());
    }

    #[test]
    fn completion_cells_are_uniform() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let s = shape(&[2, 2, 2]);
        let n = 100_000;
        let xs = make_completion_design(&s, n, &mut rng).unwrap();
        let mut counts = [0usize; 8];
        for x in &xs {
            counts[s.flat_index(&x.entries()[0].index).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.125).abs() < 0.01);
        }
    }

    #[test]
    fn duplicates_are_merged() {
        let x = SparseMeasurement::new(
            shape(&[2, 2]),
            vec![(vec![1, 1], 0.25), (vec![0, 1], 0.1), (vec![1, 1], 0.25)],
        )
        .unwrap();
        assert_eq!(x.entries().len(), 2);
        assert_eq!(x.entries()[1].weight, 0.5);
    }

    #[test]
    fn gate_policies() {
        let s = shape(&[2, 2]);
        let small = SparseMeasurement::new(s.clone(), vec![(vec![0, 0], 0.7)]).unwrap();
        for policy in [GatePolicy::Reject, GatePolicy::Rescale] {
            let g = normalize_l1_gate(small.clone(), policy).unwrap();
            assert_eq!(g.measurement, small);
            assert_eq!(g.scale, 1.0);
        }
        let big = SparseMeasurement::new(s, vec![(vec![0, 0], 1.5), (vec![1, 0], -0.5)]).unwrap();
        match normalize_l1_gate(big.clone(), GatePolicy::Reject) {
            Err(Error::L1Gate { norm }) => assert_eq!(norm, 2.0),
            other => panic!("expected gate rejection, got {other:?}"),
        }
        let g = normalize_l1_gate(big, GatePolicy::Rescale).unwrap();
        assert_eq!(g.scale, 0.5);
        assert_eq!(g.measurement.l1_norm(), 1.0);
        assert_eq!(g.measurement.entries()[0].weight, 0.75);
    }

    #[test]
    fn design_set_enforces_l1() {
        let s = shape(&[2, 2]);
        let x = SparseMeasurement::new(s.clone(), vec![(vec![0, 0], 1.2)]).unwrap();
        assert!(matches!(
            DesignSet::new(s, vec![Observation { x, y: 0.0 }]),
            Err(Error::L1Gate { .. })
        ));
    }

    #[test]
    fn multitask_measurements() {
        let mut p = vec![0.0; 4];
        p[0] = 1.0;
        let gated = make_multitask_design(
            2,
            3,
            4,
            &[
                TaskInput { s: 0, t: 0, predictor: p },
                TaskInput { s: 1, t: 2, predictor: vec![0.25, 0.0, -0.125, 0.125] },
            ],
            GatePolicy::Reject,
        )
        .unwrap();
        assert_eq!(gated[0].measurement.entries(), &[Entry { index: vec![0, 0, 0], weight: 1.0 }]);
        let x = &gated[1].measurement;
        assert_eq!(x.l1_norm(), 0.5);
        assert!(x.entries().iter().all(|e| e.index[0] == 1 && e.index[1] == 2));

        let too_big = make_multitask_design(
            1,
            1,
            2,
            &[TaskInput { s: 0, t: 0, predictor: vec![1.0, 1.0] }],
            GatePolicy::Reject,
        );
        assert!(matches!(too_big, Err(Error::L1Gate { .. })));
    }

    #[test]
    fn kinds_are_inferred() {
        let s = shape(&[2, 2, 3]);
        let ind = SparseMeasurement::indicator(s.clone(), vec![0, 1, 2]).unwrap();
        let fiber = SparseMeasurement::new(s.clone(), vec![(vec![1, 1, 0], 0.5), (vec![1, 1, 2], 0.5)]).unwrap();
        let spread = SparseMeasurement::new(s.clone(), vec![(vec![0, 1, 0], 0.5), (vec![1, 1, 2], 0.5)]).unwrap();
        let obs = |x: &SparseMeasurement| Observation { x: x.clone(), y: 0.0 };
        assert_eq!(DesignSet::new(s.clone(), vec![obs(&ind)]).unwrap().kind(), DesignKind::ElementIndicator);
        assert_eq!(DesignSet::new(s.clone(), vec![obs(&ind), obs(&fiber)]).unwrap().kind(), DesignKind::TaskSlice);
        assert_eq!(DesignSet::new(s, vec![obs(&spread)]).unwrap().kind(), DesignKind::GenericSparse);
    }

    #[test]
    fn noiseless_limit_and_determinism() {
        let s = shape(&[3, 2, 2]);
        let truth = CpFactors::from_fn(s.clone(), 2, |k, r, j| 0.3 * (k + r) as f64 - 0.2 * j as f64).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let xs = make_completion_design(&s, 20, &mut rng).unwrap();
        let noise = NoiseSpec::new(1e-15).unwrap();
        let a = generate_responses(&truth, xs.clone(), noise, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let b = generate_responses(&truth, xs, noise, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        for obs in a.observations() {
            let exact = truth.element(&obs.x.entries()[0].index).unwrap();
            assert!((obs.y - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_moments() {
        let s = shape(&[2, 2, 2]);
        let truth = CpFactors::zeros(s.clone(), 1);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let n = 100_000;
        let xs = make_completion_design(&s, n, &mut rng).unwrap();
        let d = generate_responses(&truth, xs, NoiseSpec::new(1.0).unwrap(), &mut rng).unwrap();
        let mean = d.responses().sum::<f64>() / n as f64;
        let var = d.responses().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::new(0.0).is_err());
        assert!(NoiseSpec::new(-1.0).is_err());
        assert!(NoiseSpec::new(f64::NAN).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let s = shape(&[3, 2, 2]);
        let truth = CpFactors::from_fn(s.clone(), 1, |_, _, j| 0.5 + j as f64).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let xs = make_completion_design(&s, 12, &mut rng).unwrap();
        let d = generate_responses(&truth, xs, NoiseSpec::new(0.3).unwrap(), &mut rng).unwrap();
        let mut buf = Vec::new();
        write_observations_csv(&mut buf, &d).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("j1,j2,j3,weight,y\n"));
        let back = read_observations_csv(buf.as_slice(), &s, GatePolicy::Reject).unwrap();
        assert_eq!(back, d);

        let (mut e, mut r) = (Vec::new(), Vec::new());
        write_multi_csv(&mut e, &mut r, &d).unwrap();
        let back = read_multi_csv(e.as_slice(), r.as_slice(), &s, GatePolicy::Reject).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn multi_csv_merges_and_gates() {
        let s = shape(&[2, 2]);
        let entries = "mid,j1,j2,weight\n4,0,0,0.5\n4,0,0,0.25\n9,1,1,2.0\n";
        let responses = "mid,y\n4,1.0\n9,3.0\n";
        let rejected = read_multi_csv(entries.as_bytes(), responses.as_bytes(), &s, GatePolicy::Reject);
        assert!(matches!(rejected, Err(Error::L1Gate { .. })));
        let d = read_multi_csv(entries.as_bytes(), responses.as_bytes(), &s, GatePolicy::Rescale).unwrap();
        assert_eq!(d.observations()[0].x.entries()[0].weight, 0.75);
        assert_eq!(d.observations()[1].x.entries()[0].weight, 1.0);
        assert_eq!(d.observations()[1].y, 1.5);

        let missing = read_multi_csv(entries.as_bytes(), "mid,y\n4,1.0\n".as_bytes(), &s, GatePolicy::Rescale);
        assert!(matches!(missing, Err(Error::Parse(_))));
    }

    #[test]
    fn bad_header_is_rejected() {
        let s = shape(&[2, 2]);
        let r = read_observations_csv("a,b,weight,y\n0,0,1,1\n".as_bytes(), &s, GatePolicy::Reject);
        assert!(matches!(r, Err(Error::Parse(_))));
        let r = read_observations_csv("j1,j2,weight,y\n0,5,1,1\n".as_bytes(), &s, GatePolicy::Reject);
        assert!(matches!(r, Err(Error::Structural(_))));
    }
}
