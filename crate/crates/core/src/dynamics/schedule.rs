//! Piecewise bias-current profiles s_J(t).

use serde::{Deserialize, Serialize};

use super::DynamicsError;

/// Upper limit of the bias anywhere in a schedule.
pub const MAX_BIAS: f64 = 0.99;


/// One piece of a bias profile. Every ramp runs monotonically from `from` to `to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Hold { s: f64, duration: f64 },
    /// Linear change over `duration` (the crossover time).
    Trapezoid { from: f64, to: f64, duration: f64 },
    /// Error-function step over a window of 2·`crossover`, centred, with a
    /// 10–90% rise time equal to `crossover`.
    Gaussian { from: f64, to: f64, crossover: f64 },
    /// Arctangent step over `duration`, centred `center` ns after the segment
    /// start, with the central slope of a linear ramp of length `crossover`.
    /// The profile is rescaled to hit both endpoints exactly, so its
    /// power-law tails run to the segment boundaries.
    Arctangent { from: f64, to: f64, duration: f64, center: f64, crossover: f64 },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match *self {
            Segment::Hold { duration, .. } => duration,
            Segment::Trapezoid { duration, .. } => duration,
            Segment::Gaussian { crossover, .. } => 2.0 * crossover,
            Segment::Arctangent { duration, .. } => duration,
        }
    }

    pub fn start_value(&self) -> f64 {
        match *self {
            Segment::Hold { s, .. } => s,
            Segment::Trapezoid { from, .. }
            | Segment::Gaussian { from, .. }
            | Segment::Arctangent { from, .. } => from,
        }
    }

    pub fn end_value(&self) -> f64 {
        match *self {
            Segment::Hold { s, .. } => s,
            Segment::Trapezoid { to, .. } | Segment::Gaussian { to, .. } | Segment::Arctangent { to, .. } => to,
        }
    }

    pub fn is_hold(&self) -> bool {
        matches!(self, Segment::Hold { .. })
    }
}

/// Per-junction segment lists sharing one time axis starting at t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSchedule {
    pub junctions: Vec<Vec<Segment>>,
}

impl BiasSchedule {
    pub fn new(junctions: Vec<Vec<Segment>>) -> Self {
        BiasSchedule { junctions }
    }

    /// A single junction held at `s` for `duration`.
    pub fn constant(s: f64, duration: f64) -> Self {
        BiasSchedule { junctions: vec![vec![Segment::Hold { s, duration }]] }
    }

    pub fn total_duration(&self) -> f64 {
        self.junctions
            .iter()
            .map(|segs| segs.iter().map(Segment::duration).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn compile(&self) -> Result<CompiledSchedule, DynamicsError> {
        if self.junctions.is_empty() {
            return Err(DynamicsError::Schedule("schedule has no junctions".into()));
        }
        let total = self.total_duration();
        if !(total > 0.0) {
            return Err(DynamicsError::Schedule("schedule duration must be positive".into()));
        }
        let mut out = Vec::new();
        for (j, segs) in self.junctions.iter().enumerate() {
            let mut t = 0.0;
            let mut prev: Option<f64> = None;
            let mut compiled = Vec::new();
            for seg in segs {
                let d = seg.duration();
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(DynamicsError::Schedule(format!("junction {}: negative or invalid duration {d}", j + 1)));
                }
                for v in [seg.start_value(), seg.end_value()] {
                    if !(0.0..=MAX_BIAS).contains(&v) {
                        return Err(DynamicsError::Schedule(format!(
                            "junction {}: bias {v} outside [0, {MAX_BIAS}]",
                            j + 1
                        )));
                    }
                }
                if let Some(p) = prev {
                    if (p - seg.start_value()).abs() > 1e-12 {
                        return Err(DynamicsError::Schedule(format!(
                            "junction {}: discontinuous bias at t = {t} ns ({p} -> {})",
                            j + 1,
                            seg.start_value()
                        )));
                    }
                }
                prev = Some(seg.end_value());
                if d > 0.0 {
                    compiled.push(CompiledSegment::new(seg, t)?);
                }
                t += d;
            }
            if (t - total).abs() > 1e-9 {
                return Err(DynamicsError::Schedule(format!(
                    "junction {} schedule lasts {t} ns, others {total} ns",
                    j + 1
                )));
            }
            if compiled.is_empty() {
                return Err(DynamicsError::Schedule(format!("junction {} has no segments", j + 1)));
            }
            out.push(compiled);
        }
        Ok(CompiledSchedule { junctions: out, total })
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Constant,
    Linear,
    Erf { center: f64, width: f64, e0: f64, scale: f64 },
    Atan { center: f64, width: f64, a0: f64, scale: f64 },
}

#[derive(Clone, Debug)]
pub struct CompiledSegment {
    pub start: f64,
    pub duration: f64,
    from: f64,
    span: f64,
    shape: Shape,
}

impl CompiledSegment {
    fn new(seg: &Segment, start: f64) -> Result<Self, DynamicsError> {
        let duration = seg.duration();
        let (from, span) = (seg.start_value(), seg.end_value() - seg.start_value());
        let shape = match *seg {
            Segment::Hold { .. } => Shape::Constant,
            Segment::Trapezoid { .. } => Shape::Linear,
            Segment::Gaussian { crossover, .. } => {
                let width = crossover / erf_rise_ratio();
                let center = crossover;
                let e0 = libm::erf(-center / width);
                let e1 = libm::erf((duration - center) / width);
                Shape::Erf { center, width, e0, scale: 1.0 / (e1 - e0) }
            }
            Segment::Arctangent { center, crossover, .. } => {
                if !(center > 0.0 && center < duration && crossover > 0.0 && crossover < duration) {
                    return Err(DynamicsError::Schedule(format!(
                        "arctangent center {center} and crossover {crossover} must lie inside the {duration} ns segment"
                    )));
                }
                let width = arctan_width(duration, center, crossover);
                let a0 = (-center / width).atan();
                let a1 = ((duration - center) / width).atan();
                Shape::Atan { center, width, a0, scale: 1.0 / (a1 - a0) }
            }
        };
        Ok(CompiledSegment { start, duration, from, span, shape })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, Shape::Constant) || self.span == 0.0
    }

    /// Bias and its time derivative at local time `tau` ∈ [0, duration].
    pub fn eval(&self, tau: f64) -> (f64, f64) {
        match self.shape {
            Shape::Constant => (self.from, 0.0),
            Shape::Linear => {
                let r = self.span / self.duration;
                (self.from + r * tau, r)
            }
            Shape::Erf { center, width, e0, scale } => {
                let x = (tau - center) / width;
                let f = (libm::erf(x) - e0) * scale;
                let df = scale * 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() / width;
                (self.from + self.span * f, self.span * df)
            }
            Shape::Atan { center, width, a0, scale } => {
                let x = (tau - center) / width;
                let f = (x.atan() - a0) * scale;
                let df = scale / (width * (1.0 + x * x));
                (self.from + self.span * f, self.span * df)
            }
        }
    }
}

/// a = τ/w for the rescaled erf step over [0, 2τ] centred at τ: its 10–90%
/// points sit at τ ± τ/2 when erf(a/2) = 0.8·erf(a).
fn erf_rise_ratio() -> f64 {
    let q = |a: f64| libm::erf(a / 2.0) - 0.8 * libm::erf(a);
    let (mut lo, mut hi) = (1.0, 4.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if q(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Width w with w·[atan((T − c)/w) + atan(c/w)] = τ: the normalized profile then
/// has central slope 1/τ, the slope of a linear ramp of length τ.
fn arctan_width(duration: f64, center: f64, crossover: f64) -> f64 {
    let h = |w: f64| w * (((duration - center) / w).atan() + (center / w).atan()) - crossover;
    let (mut lo, mut hi) = (1e-12 * crossover, crossover);
    while h(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// A validated schedule ready for evaluation.
#[derive(Clone, Debug)]
pub struct CompiledSchedule {
    pub junctions: Vec<Vec<CompiledSegment>>,
    pub total: f64,
}

impl CompiledSchedule {
    /// Sorted union of all segment boundaries, including 0 and the end.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = vec![0.0, self.total];
        for segs in &self.junctions {
            for s in segs {
                pts.push(s.start);
                pts.push(s.start + s.duration);
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        pts
    }

    /// Index of the segment of junction `j` that contains the open interval around `t`.
    pub fn segment_at(&self, j: usize, t: f64) -> usize {
        let segs = &self.junctions[j];
        match segs.iter().position(|s| t < s.start + s.duration) {
            Some(i) => i,
            None => segs.len() - 1,
        }
    }

    /// (s, ṡ) of junction `j` at time `t`, taking right-sided values at boundaries.
    pub fn eval(&self, j: usize, t: f64) -> (f64, f64) {
        let seg = &self.junctions[j][self.segment_at(j, t)];
        seg.eval((t - seg.start).clamp(0.0, seg.duration))
    }

    /// Range of bias visited by junction `j`.
    pub fn bias_range(&self, j: usize) -> (f64, f64) {
        self.junctions[j].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            let a = s.from;
            let b = s.from + s.span;
            (lo.min(a).min(b), hi.max(a).max(b))
        })
    }
}
