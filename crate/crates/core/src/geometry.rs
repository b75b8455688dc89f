//! Points, lattices, strips and closed-form field descriptors on
//! ℝⁿ = ℝ × ℝ^m. Everything here is immutable after construction and
//! evaluation is pure.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// The query sits on a lattice cell boundary within the tie tolerance,
    /// so "the nearest lattice point" is not well defined.
    #[error("ambiguous nearest lattice point along axis {axis} at coordinate {value}")]
    AmbiguousNearest { axis: usize, value: f64 },
    #[error("lattice index entries must be 0 or 1, got {0}")]
    BadIndexEntry(u8),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Relative tie tolerance for nearest-lattice-point queries, in units of
/// the lattice spacing. Ambiguous queries error rather than silently
/// breaking the tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A point of ℝⁿ split as (x, y) with x ∈ ℝ and y ∈ ℝ^m.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: Vec<f64>,
}

impl Point {
    pub fn new(x: f64, y: Vec<f64>) -> Self {
        Point { x, y }
    }

    /// Ambient dimension n = 1 + m.
    pub fn dim(&self) -> usize {
        1 + self.y.len()
    }

    /// Flatten to ambient coordinates [x, y_1, ..., y_m].
    pub fn coords(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.dim());
        c.push(self.x);
        c.extend_from_slice(&self.y);
        c
    }

    pub fn from_coords(c: &[f64]) -> Self {
        Point { x: c[0], y: c[1..].to_vec() }
    }
}

/// Axis-aligned box in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
        BoxRegion { lo, hi }
    }

    /// The cube [lo, hi]^dim.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        BoxRegion::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BoxRegion) -> BoxRegion {
        BoxRegion::new(
            self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        )
    }

    pub fn translated(&self, offset: &[f64]) -> BoxRegion {
        BoxRegion::new(
            self.lo.iter().zip(offset).map(|(a, o)| a + o).collect(),
            self.hi.iter().zip(offset).map(|(a, o)| a + o).collect(),
        )
    }

    pub fn scaled(&self, lambda: f64) -> BoxRegion {
        assert!(lambda > 0.0);
        BoxRegion::new(
            self.lo.iter().map(|a| a * lambda).collect(),
            self.hi.iter().map(|a| a * lambda).collect(),
        )
    }

    pub fn sample_uniform<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| rng.gen_range(*a..*b))
            .collect()
    }
}

/// One of the 2^m sublattices Z_I = (2/k)ℤ^m + I/k of (1/k)ℤ^m.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub k: u32,
    pub index: Vec<u8>,
}

impl Lattice {
    pub fn new(k: u32, index: Vec<u8>) -> Result<Self, GeometryError> {
        assert!(k >= 1);
        if let Some(&bad) = index.iter().find(|&&b| b > 1) {
            return Err(GeometryError::BadIndexEntry(bad));
        }
        Ok(Lattice { k, index })
    }

    pub fn m(&self) -> usize {
        self.index.len()
    }

    /// Spacing 2/k of Z_I along every axis.
    pub fn spacing(&self) -> f64 {
        2.0 / self.k as f64
    }

    fn offset(&self, axis: usize) -> f64 {
        self.index[axis] as f64 / self.k as f64
    }

    /// The nearest point [y]_I of Z_I, erroring when y lies on a cell
    /// boundary within the tie tolerance.
    pub fn nearest_point(&self, y: &[f64]) -> Result<Vec<f64>, GeometryError> {
        if y.len() != self.m() {
            return Err(GeometryError::DimensionMismatch { expected: self.m(), got: y.len() });
        }
        let h = self.spacing();
        let mut z = Vec::with_capacity(y.len());
        for (axis, &v) in y.iter().enumerate() {
            let t = (v - self.offset(axis)) / h;
            let r = t.round();
            if ((t - r).abs() - 0.5).abs() <= TIE_TOLERANCE {
                return Err(GeometryError::AmbiguousNearest { axis, value: v });
            }
            z.push(r * h + self.offset(axis));
        }
        Ok(z)
    }

    /// Like [`nearest_point`](Self::nearest_point) but breaks ties by
    /// rounding; used by field evaluation, where ties land in regions
    /// where the fields vanish anyway.
    pub fn nearest_point_unchecked(&self, y: &[f64]) -> Vec<f64> {
        let h = self.spacing();
        y.iter()
            .enumerate()
            .map(|(axis, &v)| ((v - self.offset(axis)) / h).round() * h + self.offset(axis))
            .collect()
    }

    /// Componentwise distances |y_j - z_j| to the nearest lattice point.
    /// Well defined even on cell boundaries.
    pub fn component_distances(&self, y: &[f64]) -> Vec<f64> {
        let h = self.spacing();
        y.iter()
            .enumerate()
            .map(|(axis, &v)| {
                let t = (v - self.offset(axis)) / h;
                (t - t.round()).abs() * h
            })
            .collect()
    }

    /// Membership in the strip (Z_I + [-halfwidth, halfwidth]^m) ∩ [0,1]^m.
    pub fn strip_contains(&self, p: &Point, halfwidth: f64) -> bool {
        assert!(halfwidth > 0.0 && halfwidth <= 1.0 / self.k as f64);
        if !p.y.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            return false;
        }
        self.component_distances(&p.y).iter().all(|&d| d <= halfwidth)
    }

    /// Z_I ∩ [0,1]^m, ordered lexicographically.
    pub fn points_in_unit_cube(&self) -> Vec<Vec<f64>> {
        let h = self.spacing();
        let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(self.m());
        for axis in 0..self.m() {
            let mut vals = Vec::new();
            let mut j = ((0.0 - self.offset(axis)) / h).ceil() as i64;
            loop {
                let v = j as f64 * h + self.offset(axis);
                if v > 1.0 + 1e-12 {
                    break;
                }
                if v >= -1e-12 {
                    vals.push(v.clamp(0.0, 1.0));
                }
                j += 1;
            }
            per_axis.push(vals);
        }
        let mut out = vec![Vec::new()];
        for vals in &per_axis {
            let mut next = Vec::with_capacity(out.len() * vals.len());
            for prefix in &out {
                for &v in vals {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }
}

/// The 2^m lattice indices I ∈ {0,1}^m in stage order: binary counting
/// with the first axis as the least significant bit, so m = 2 gives
/// (0,0), (1,0), (0,1), (1,1).
pub fn index_order(m: usize) -> Vec<Vec<u8>> {
    (0..1usize << m)
        .map(|j| (0..m).map(|i| ((j >> i) & 1) as u8).collect())
        .collect()
}

/// Quintic smoothstep s(t) = 6t⁵ - 15t⁴ + 10t³ clamped to [0,1].
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
    }
}

fn smoothstep_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (t - 1.0) * (t - 1.0)
    }
}

/// Plateau taper in one scalar distance: 1 for d ≤ a, smoothstep down to
/// 0 at d = b, 0 beyond.
pub fn plateau_taper(d: f64, a: f64, b: f64) -> f64 {
    debug_assert!(b > a);
    1.0 - smoothstep((d - a) / (b - a))
}

/// d/dd of [`plateau_taper`].
pub fn plateau_taper_deriv(d: f64, a: f64, b: f64) -> f64 {
    -smoothstep_deriv((d - a) / (b - a)) / (b - a)
}

/// Max |d/dd| of the quintic smoothstep, scaled by the taper width.
fn plateau_lipschitz(a: f64, b: f64) -> f64 {
    1.875 / (b - a)
}

/// Radial scalar profiles used by [`FieldDescriptor::Radial`].
#[derive(Debug, Clone, PartialEq)]
pub enum RadialProfile {
    /// 1 for |x| ≤ r, log(1/|x|)/log(1/r) on r < |x| < 1, 0 beyond; r is
    /// carried as log r so that doubly exponentially small radii stay
    /// representable.
    LogCutoff { log_r: f64 },
    /// 1 for |x| ≤ plateau, smoothstep to 0 at |x| = outer.
    SmoothPlateau { plateau: f64, outer: f64 },
}

impl RadialProfile {
    fn outer_radius(&self) -> f64 {
        match self {
            RadialProfile::LogCutoff { .. } => 1.0,
            RadialProfile::SmoothPlateau { outer, .. } => *outer,
        }
    }

    fn value(&self, rho: f64) -> f64 {
        match self {
            RadialProfile::LogCutoff { log_r } => {
                debug_assert!(*log_r < 0.0);
                if rho >= 1.0 {
                    0.0
                } else if rho == 0.0 || rho.ln() <= *log_r {
                    1.0
                } else {
                    rho.ln() / log_r
                }
            }
            RadialProfile::SmoothPlateau { plateau, outer } => {
                plateau_taper(rho, *plateau, *outer)
            }
        }
    }

    /// d/dρ of the profile (a.e.; the kinks have measure zero).
    fn deriv(&self, rho: f64) -> f64 {
        match self {
            RadialProfile::LogCutoff { log_r } => {
                if rho >= 1.0 || rho == 0.0 || rho.ln() <= *log_r {
                    0.0
                } else {
                    1.0 / (rho * log_r)
                }
            }
            RadialProfile::SmoothPlateau { plateau, outer } => {
                plateau_taper_deriv(rho, *plateau, *outer)
            }
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            RadialProfile::LogCutoff { log_r } => {
                // steepest at the inner radius: 1/(r |log r|)
                1.0 / ((log_r.exp()) * (-log_r))
            }
            RadialProfile::SmoothPlateau { plateau, outer } => plateau_lipschitz(*plateau, *outer),
        }
    }
}

/// Closed-form scalar/vector field on ℝⁿ with a declared support box.
/// Evaluation outside the support box is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldDescriptor {
    /// Identically zero field.
    Zero { dim: usize, out_dim: usize },
    /// Scalar radial profile about a center.
    Radial { center: Vec<f64>, profile: RadialProfile },
    /// Scalar product of per-axis plateau tapers: 1 on [lo, hi], 0 outside
    /// the margin-widened box. χ is the instance with lo = 0, hi = 1,
    /// margin = 1/4.
    Taper { lo: Vec<f64>, hi: Vec<f64>, margin: f64 },
    /// The stage-one squeeze field (rate/k)·u(k·y - I)·χ(x,y) with u the
    /// 2ℤ^m-periodic profile equal to -w on [-1/2,1/2]^m. Output lives in
    /// the y-components.
    PeriodicSqueeze { lattice: Lattice, rate: f64, cutoff: Box<FieldDescriptor> },
    /// The stage-two squeeze field -rate·(y-[y]_I)·ρ(‖y-[y]_I‖_∞)·χ(x,y)
    /// with ρ ≡ 1 for d ≤ inner_halfwidth and linear-in-radius decay to 0
    /// at 2·inner_halfwidth. Output lives in the y-components.
    PinchSqueeze { lattice: Lattice, rate: f64, inner_halfwidth: f64, cutoff: Box<FieldDescriptor> },
    /// Finite sum of translates of a scalar term: Σ_c term(q - c).
    LatticeSum { term: Box<FieldDescriptor>, centers: Vec<Vec<f64>> },
    /// Inner field evaluated at (x - shift, y).
    TimeShifted { inner: Box<FieldDescriptor>, shift: f64 },
    /// amplitude · inner(q).
    Scaled { inner: Box<FieldDescriptor>, amplitude: f64 },
    /// inner(q / lambda).
    Dilated { inner: Box<FieldDescriptor>, lambda: f64 },
    /// inner(q - offset).
    Translated { inner: Box<FieldDescriptor>, offset: Vec<f64> },
}

impl FieldDescriptor {
    /// The standard cutoff χ: 1 on [0,1]ⁿ, 0 outside (-1/4, 1+1/4)ⁿ.
    pub fn chi(dim: usize) -> FieldDescriptor {
        FieldDescriptor::Taper { lo: vec![0.0; dim], hi: vec![1.0; dim], margin: 0.25 }
    }

    /// Radial plateau bump at the origin with plateau radius scale/2 and
    /// support radius scale. The built-in calibration family uses scales
    /// 1, 1/4, 1/16.
    pub fn radial_bump(dim: usize, scale: f64) -> FieldDescriptor {
        FieldDescriptor::Radial {
            center: vec![0.0; dim],
            profile: RadialProfile::SmoothPlateau { plateau: scale / 2.0, outer: scale },
        }
    }

    /// Ambient dimension n.
    pub fn dim(&self) -> usize {
        match self {
            FieldDescriptor::Zero { dim, .. } => *dim,
            FieldDescriptor::Radial { center, .. } => center.len(),
            FieldDescriptor::Taper { lo, .. } => lo.len(),
            FieldDescriptor::PeriodicSqueeze { cutoff, .. } => cutoff.dim(),
            FieldDescriptor::PinchSqueeze { cutoff, .. } => cutoff.dim(),
            FieldDescriptor::LatticeSum { term, .. } => term.dim(),
            FieldDescriptor::TimeShifted { inner, .. }
            | FieldDescriptor::Scaled { inner, .. }
            | FieldDescriptor::Dilated { inner, .. }
            | FieldDescriptor::Translated { inner, .. } => inner.dim(),
        }
    }

    /// Number of output components (1 for scalar fields, m for the
    /// squeeze fields).
    pub fn out_dim(&self) -> usize {
        match self {
            FieldDescriptor::Zero { out_dim, .. } => *out_dim,
            FieldDescriptor::Radial { .. } | FieldDescriptor::Taper { .. } => 1,
            FieldDescriptor::PeriodicSqueeze { lattice, .. } => lattice.m(),
            FieldDescriptor::PinchSqueeze { lattice, .. } => lattice.m(),
            FieldDescriptor::LatticeSum { term, .. } => term.out_dim(),
            FieldDescriptor::TimeShifted { inner, .. }
            | FieldDescriptor::Scaled { inner, .. }
            | FieldDescriptor::Dilated { inner, .. }
            | FieldDescriptor::Translated { inner, .. } => inner.out_dim(),
        }
    }

    /// Declared support box; evaluation outside is exactly zero.
    pub fn support(&self) -> BoxRegion {
        match self {
            FieldDescriptor::Zero { dim, .. } => BoxRegion::cube(*dim, 0.0, 0.0),
            FieldDescriptor::Radial { center, profile } => {
                let r = profile.outer_radius();
                BoxRegion::new(
                    center.iter().map(|c| c - r).collect(),
                    center.iter().map(|c| c + r).collect(),
                )
            }
            FieldDescriptor::Taper { lo, hi, margin } => BoxRegion::new(
                lo.iter().map(|v| v - margin).collect(),
                hi.iter().map(|v| v + margin).collect(),
            ),
            FieldDescriptor::PeriodicSqueeze { cutoff, .. }
            | FieldDescriptor::PinchSqueeze { cutoff, .. } => cutoff.support(),
            FieldDescriptor::LatticeSum { term, centers } => {
                let base = term.support();
                centers
                    .iter()
                    .map(|c| base.translated(c))
                    .reduce(|a, b| a.union(&b))
                    .unwrap_or(base)
            }
            FieldDescriptor::TimeShifted { inner, shift } => {
                let mut b = inner.support();
                b.lo[0] += shift;
                b.hi[0] += shift;
                b
            }
            FieldDescriptor::Scaled { inner, .. } => inner.support(),
            FieldDescriptor::Dilated { inner, lambda } => inner.support().scaled(*lambda),
            FieldDescriptor::Translated { inner, offset } => inner.support().translated(offset),
        }
    }

    /// Evaluate into `out` (length `out_dim`).
    pub fn eval(&self, q: &[f64], out: &mut [f64]) {
        debug_assert_eq!(q.len(), self.dim());
        debug_assert_eq!(out.len(), self.out_dim());
        out.iter_mut().for_each(|v| *v = 0.0);
        if !matches!(self, FieldDescriptor::Zero { .. }) && !self.support().contains(q) {
            return;
        }
        match self {
            FieldDescriptor::Zero { .. } => {}
            FieldDescriptor::Radial { center, profile } => {
                let rho = dist(q, center);
                out[0] = profile.value(rho);
            }
            FieldDescriptor::Taper { lo, hi, margin } => {
                let mut v = 1.0;
                for i in 0..q.len() {
                    let d = (lo[i] - q[i]).max(q[i] - hi[i]).max(0.0);
                    v *= plateau_taper(d, 0.0, *margin);
                }
                out[0] = v;
            }
            FieldDescriptor::PeriodicSqueeze { lattice, rate, cutoff } => {
                let chi = cutoff.eval_scalar(q);
                if chi == 0.0 {
                    return;
                }
                let k = lattice.k as f64;
                let mut taper = 1.0;
                let mut w = vec![0.0; lattice.m()];
                for (j, wj) in w.iter_mut().enumerate() {
                    let t = k * q[1 + j] - lattice.index[j] as f64;
                    *wj = (t + 1.0).rem_euclid(2.0) - 1.0;
                    taper *= plateau_taper(wj.abs(), 0.5, 1.0);
                }
                for (j, wj) in w.iter().enumerate() {
                    out[j] = -(rate / k) * wj * taper * chi;
                }
            }
            FieldDescriptor::PinchSqueeze { lattice, rate, inner_halfwidth, cutoff } => {
                let chi = cutoff.eval_scalar(q);
                if chi == 0.0 {
                    return;
                }
                let w = *inner_halfwidth;
                let d = lattice
                    .component_distances(&q[1..])
                    .into_iter()
                    .fold(0.0_f64, f64::max);
                let rho = if d <= w {
                    1.0
                } else if d < 2.0 * w {
                    (2.0 * w - d) / w
                } else {
                    return;
                };
                let z = lattice.nearest_point_unchecked(&q[1..]);
                for j in 0..lattice.m() {
                    out[j] = -rate * (q[1 + j] - z[j]) * rho * chi;
                }
            }
            FieldDescriptor::LatticeSum { term, centers } => {
                let mut shifted = vec![0.0; q.len()];
                let mut tmp = vec![0.0; term.out_dim()];
                let term_support = term.support();
                for c in centers {
                    for i in 0..q.len() {
                        shifted[i] = q[i] - c[i];
                    }
                    if !term_support.contains(&shifted) {
                        continue;
                    }
                    term.eval(&shifted, &mut tmp);
                    for (o, t) in out.iter_mut().zip(&tmp) {
                        *o += *t;
                    }
                }
            }
            FieldDescriptor::TimeShifted { inner, shift } => {
                let mut shifted = q.to_vec();
                shifted[0] -= shift;
                inner.eval(&shifted, out);
            }
            FieldDescriptor::Scaled { inner, amplitude } => {
                inner.eval(q, out);
                out.iter_mut().for_each(|v| *v *= amplitude);
            }
            FieldDescriptor::Dilated { inner, lambda } => {
                let scaled: Vec<f64> = q.iter().map(|v| v / lambda).collect();
                inner.eval(&scaled, out);
            }
            FieldDescriptor::Translated { inner, offset } => {
                let shifted: Vec<f64> = q.iter().zip(offset).map(|(v, o)| v - o).collect();
                inner.eval(&shifted, out);
            }
        }
    }

    pub fn eval_vec(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.eval(q, &mut out);
        out
    }

    /// Scalar value; panics if the field is vector valued.
    pub fn eval_scalar(&self, q: &[f64]) -> f64 {
        assert_eq!(self.out_dim(), 1);
        let mut out = [0.0];
        self.eval(q, &mut out);
        out[0]
    }

    /// Euclidean magnitude |f(q)|.
    pub fn eval_norm(&self, q: &[f64]) -> f64 {
        let v = self.eval_vec(q);
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Spatial gradient of a scalar field, analytic where the descriptor
    /// admits one and central differences otherwise.
    pub fn grad_scalar(&self, q: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.out_dim(), 1);
        debug_assert_eq!(out.len(), self.dim());
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            FieldDescriptor::Zero { .. } => {}
            FieldDescriptor::Radial { center, profile } => {
                let rho = dist(q, center);
                if rho == 0.0 {
                    return;
                }
                let dv = profile.deriv(rho);
                for i in 0..q.len() {
                    out[i] = dv * (q[i] - center[i]) / rho;
                }
            }
            FieldDescriptor::Taper { lo, hi, margin } => {
                if !self.support().contains(q) {
                    return;
                }
                let mut vals = vec![0.0; q.len()];
                let mut ders = vec![0.0; q.len()];
                for i in 0..q.len() {
                    let d = (lo[i] - q[i]).max(q[i] - hi[i]).max(0.0);
                    vals[i] = plateau_taper(d, 0.0, *margin);
                    let sign = if q[i] < lo[i] {
                        -1.0
                    } else if q[i] > hi[i] {
                        1.0
                    } else {
                        0.0
                    };
                    ders[i] = sign * plateau_taper_deriv(d, 0.0, *margin);
                }
                for i in 0..q.len() {
                    let mut g = ders[i];
                    for (j, v) in vals.iter().enumerate() {
                        if j != i {
                            g *= v;
                        }
                    }
                    out[i] = g;
                }
            }
            FieldDescriptor::LatticeSum { term, centers } => {
                let mut shifted = vec![0.0; q.len()];
                let mut tmp = vec![0.0; q.len()];
                let term_support = term.support();
                for c in centers {
                    for i in 0..q.len() {
                        shifted[i] = q[i] - c[i];
                    }
                    if !term_support.contains(&shifted) {
                        continue;
                    }
                    term.grad_scalar(&shifted, &mut tmp);
                    for (o, t) in out.iter_mut().zip(&tmp) {
                        *o += *t;
                    }
                }
            }
            FieldDescriptor::TimeShifted { inner, shift } => {
                let mut shifted = q.to_vec();
                shifted[0] -= shift;
                inner.grad_scalar(&shifted, out);
            }
            FieldDescriptor::Scaled { inner, amplitude } => {
                inner.grad_scalar(q, out);
                out.iter_mut().for_each(|v| *v *= amplitude);
            }
            FieldDescriptor::Dilated { inner, lambda } => {
                let scaled: Vec<f64> = q.iter().map(|v| v / lambda).collect();
                inner.grad_scalar(&scaled, out);
                out.iter_mut().for_each(|v| *v /= lambda);
            }
            FieldDescriptor::Translated { inner, offset } => {
                let shifted: Vec<f64> = q.iter().zip(offset).map(|(v, o)| v - o).collect();
                inner.grad_scalar(&shifted, out);
            }
            _ => self.grad_central_diff_row(q, 0, out),
        }
    }

    /// Frobenius norm of the Jacobian at q. Scalar kinds route through
    /// [`grad_scalar`](Self::grad_scalar); vector kinds use central
    /// differences with a step tied to the descriptor's length scale.
    pub fn grad_frobenius(&self, q: &[f64]) -> f64 {
        let n = self.dim();
        if self.out_dim() == 1 {
            let mut g = vec![0.0; n];
            self.grad_scalar(q, &mut g);
            return g.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        let mut row = vec![0.0; n];
        let mut sum = 0.0;
        for comp in 0..self.out_dim() {
            self.grad_central_diff_row(q, comp, &mut row);
            sum += row.iter().map(|v| v * v).sum::<f64>();
        }
        sum.sqrt()
    }

    fn grad_central_diff_row(&self, q: &[f64], comp: usize, out: &mut [f64]) {
        let h = 1e-6 * self.length_scale();
        let mut qp = q.to_vec();
        let mut buf_p = vec![0.0; self.out_dim()];
        let mut buf_m = vec![0.0; self.out_dim()];
        for i in 0..q.len() {
            qp[i] = q[i] + h;
            self.eval(&qp, &mut buf_p);
            qp[i] = q[i] - h;
            self.eval(&qp, &mut buf_m);
            qp[i] = q[i];
            out[i] = (buf_p[comp] - buf_m[comp]) / (2.0 * h);
        }
    }

    /// Finest length scale the descriptor varies on; central-difference
    /// steps are sized relative to this.
    pub fn length_scale(&self) -> f64 {
        match self {
            FieldDescriptor::Zero { .. } => 1.0,
            FieldDescriptor::Radial { profile, .. } => match profile {
                RadialProfile::LogCutoff { log_r } => log_r.exp().max(1e-12),
                RadialProfile::SmoothPlateau { plateau, outer } => outer - plateau,
            },
            FieldDescriptor::Taper { margin, .. } => *margin,
            FieldDescriptor::PeriodicSqueeze { lattice, .. } => 0.5 / lattice.k as f64,
            FieldDescriptor::PinchSqueeze { inner_halfwidth, .. } => *inner_halfwidth,
            FieldDescriptor::LatticeSum { term, .. } => term.length_scale(),
            FieldDescriptor::TimeShifted { inner, .. }
            | FieldDescriptor::Scaled { inner, .. }
            | FieldDescriptor::Translated { inner, .. } => inner.length_scale(),
            FieldDescriptor::Dilated { inner, lambda } => inner.length_scale() * lambda,
        }
    }

    /// Conservative Lipschitz bound; only feeds the (tiny) near-diagonal
    /// correction of the Gagliardo estimator.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            FieldDescriptor::Zero { .. } => 0.0,
            FieldDescriptor::Radial { profile, .. } => profile.lipschitz(),
            FieldDescriptor::Taper { margin, .. } => {
                self.dim() as f64 * plateau_lipschitz(0.0, *margin)
            }
            FieldDescriptor::PeriodicSqueeze { lattice, rate, cutoff } => {
                // |d((rate/k) u(k y) χ)| ≤ rate (|u'| + |u| Lip(χ)/k)
                let max_uprime = 1.0 + plateau_lipschitz(0.5, 1.0);
                rate * (max_uprime + cutoff.lipschitz_bound() / lattice.k as f64)
            }
            FieldDescriptor::PinchSqueeze { rate, inner_halfwidth, cutoff, .. } => {
                // ρ has slope 1/w, |y-z| ≤ 2w on the support of ρ
                rate * (3.0 + 2.0 * inner_halfwidth * cutoff.lipschitz_bound())
            }
            FieldDescriptor::LatticeSum { term, centers } => {
                centers.len() as f64 * term.lipschitz_bound()
            }
            FieldDescriptor::TimeShifted { inner, .. }
            | FieldDescriptor::Translated { inner, .. } => inner.lipschitz_bound(),
            FieldDescriptor::Scaled { inner, amplitude } => {
                amplitude.abs() * inner.lipschitz_bound()
            }
            FieldDescriptor::Dilated { inner, lambda } => inner.lipschitz_bound() / lambda,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lat(k: u32, index: &[u8]) -> Lattice {
        Lattice::new(k, index.to_vec()).unwrap()
    }

    #[test]
    fn nearest_point_fixes_lattice_points() {
        let l = lat(3, &[1, 0]);
        for z in l.points_in_unit_cube() {
            assert_eq!(l.nearest_point(&z).unwrap(), z);
        }
    }

    #[test]
    fn nearest_point_m1_k2_i0() {
        // lattice {.., 0, 1, ..}, spacing 1
        let l = lat(2, &[0]);
        assert_eq!(l.nearest_point(&[0.2]).unwrap(), vec![0.0]);
    }

    #[test]
    fn nearest_point_m1_k2_i1() {
        // lattice {.., -0.5, 0.5, ..}; brute-force oracle over candidates
        let l = lat(2, &[1]);
        let candidates: Vec<f64> = (-4..=4).map(|j| j as f64 + 0.5).collect();
        let y = 0.2;
        let oracle = candidates
            .iter()
            .cloned()
            .min_by(|a, b| (a - y).abs().partial_cmp(&(b - y).abs()).unwrap())
            .unwrap();
        assert_eq!(oracle, 0.5);
        assert_eq!(l.nearest_point(&[y]).unwrap(), vec![oracle]);
    }

    #[test]
    fn nearest_point_rejects_ties() {
        let l = lat(2, &[0]);
        match l.nearest_point(&[0.5]) {
            Err(GeometryError::AmbiguousNearest { axis: 0, .. }) => {}
            other => panic!("expected tie error, got {other:?}"),
        }
    }

    #[test]
    fn strip_membership_basics() {
        let l = lat(2, &[0]);
        // lattice point inside [0,1]
        assert!(l.strip_contains(&Point::new(0.0, vec![1.0]), 0.1));
        // just beyond the halfwidth
        let hw = 0.25;
        assert!(!l.strip_contains(&Point::new(0.0, vec![hw + 1e-9]), hw));
        assert!(l.strip_contains(&Point::new(0.0, vec![hw - 1e-9]), hw));
        // outside the unit cube
        assert!(!l.strip_contains(&Point::new(0.0, vec![-0.05]), 0.1));
    }

    #[test]
    fn strips_cover_unit_cube() {
        // ∪_I L_I = [0,1]^m at halfwidth 1/2k
        let k = 3;
        let hw = 0.5 / k as f64;
        let mut rng = rand::SeedableRng::seed_from_u64(7);
        let rng: &mut rand_chacha::ChaCha8Rng = &mut rng;
        for _ in 0..500 {
            let y: Vec<f64> =
                (0..2).map(|_| rand::Rng::gen_range(rng, 0.0..1.0)).collect();
            let p = Point::new(0.5, y);
            let hits = index_order(2)
                .into_iter()
                .filter(|i| lat(k, i).strip_contains(&p, hw))
                .count();
            assert!(hits >= 1, "point not covered: {:?}", p);
        }
    }

    #[test]
    fn index_order_matches_listing() {
        assert_eq!(index_order(1), vec![vec![0], vec![1]]);
        assert_eq!(
            index_order(2),
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]
        );
    }

    #[test]
    fn lattice_points_enumeration() {
        assert_eq!(lat(1, &[0]).points_in_unit_cube(), vec![vec![0.0]]);
        assert_eq!(lat(1, &[1]).points_in_unit_cube(), vec![vec![1.0]]);
        assert_eq!(lat(2, &[0]).points_in_unit_cube(), vec![vec![0.0], vec![1.0]]);
        assert_eq!(lat(2, &[1]).points_in_unit_cube(), vec![vec![0.5]]);
    }

    fn squeeze_field(k: u32, index: &[u8], rate: f64) -> FieldDescriptor {
        let dim = index.len() + 1;
        FieldDescriptor::PeriodicSqueeze {
            lattice: lat(k, index),
            rate,
            cutoff: Box::new(FieldDescriptor::chi(dim)),
        }
    }

    #[test]
    fn squeeze_profile_is_linear_on_inner_cells() {
        // u(y) = -y for y in [-1/2k, 1/2k]^m scaled: field = -rate (y - z)
        let f = squeeze_field(2, &[0], 3.0);
        let v = f.eval_vec(&[0.5, 0.2]);
        assert!((v[0] - (-3.0 * 0.2)).abs() < 1e-12, "{v:?}");
        // near the other lattice point of Z_0, still inside the cube
        let v = f.eval_vec(&[0.5, 0.9]);
        assert!((v[0] - (-3.0 * (0.9 - 1.0))).abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn squeeze_profile_periodicity() {
        // invariance under y -> y + 2/k (the 2ℤ^m periodicity of u, scaled),
        // away from the cutoff: use a wide χ
        let f = FieldDescriptor::PeriodicSqueeze {
            lattice: lat(1, &[0]),
            rate: 1.5,
            cutoff: Box::new(FieldDescriptor::Taper {
                lo: vec![-10.0, -10.0],
                hi: vec![10.0, 10.0],
                margin: 1.0,
            }),
        };
        for y in [-0.7, -0.2, 0.0, 0.3, 0.77] {
            let a = f.eval_vec(&[0.5, y]);
            let b = f.eval_vec(&[0.5, y + 2.0]);
            assert!((a[0] - b[0]).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn eval_zero_outside_support() {
        let f = squeeze_field(2, &[1], 1.0);
        assert_eq!(f.eval_vec(&[2.0, 0.25]), vec![0.0]);
        assert_eq!(f.eval_vec(&[0.5, -3.0]), vec![0.0]);
    }

    #[test]
    fn chi_is_one_on_unit_cube() {
        let chi = FieldDescriptor::chi(2);
        assert_eq!(chi.eval_scalar(&[0.0, 0.0]), 1.0);
        assert_eq!(chi.eval_scalar(&[1.0, 0.5]), 1.0);
        assert_eq!(chi.eval_scalar(&[1.3, 0.5]), 0.0);
        let v = chi.eval_scalar(&[1.1, 0.5]);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn capacity_radial_values() {
        let log_r = (0.01_f64).ln();
        let f = FieldDescriptor::Radial {
            center: vec![0.0, 0.0],
            profile: RadialProfile::LogCutoff { log_r },
        };
        assert_eq!(f.eval_scalar(&[0.005, 0.0]), 1.0);
        assert_eq!(f.eval_scalar(&[1.5, 0.0]), 0.0);
        // halfway in log scale
        let rho = (log_r / 2.0).exp();
        assert!((f.eval_scalar(&[rho, 0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn taper_gradient_matches_central_diff() {
        let f = FieldDescriptor::chi(2);
        let q = [1.1, 0.5];
        let mut g = vec![0.0; 2];
        f.grad_scalar(&q, &mut g);
        let h = 1e-6;
        for i in 0..2 {
            let mut qp = q.to_vec();
            qp[i] += h;
            let vp = f.eval_scalar(&qp);
            qp[i] -= 2.0 * h;
            let vm = f.eval_scalar(&qp);
            assert!((g[i] - (vp - vm) / (2.0 * h)).abs() < 1e-6, "axis {i}");
        }
    }

    proptest! {
        #[test]
        fn prop_support_exact_zero(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let f = squeeze_field(3, &[0], 2.0);
            let s = f.support();
            if !s.contains(&[x, y]) {
                prop_assert_eq!(f.eval_vec(&[x, y]), vec![0.0]);
            }
        }

        #[test]
        fn prop_exactly_one_strip_at_half_spacing(y in 0.0f64..1.0) {
            let k = 4u32;
            let hw = 0.5 / k as f64;
            // skip the tie neighborhood of cell boundaries
            let t = (y * k as f64).fract();
            prop_assume!((t - 0.5).abs() > 1e-6 && t > 1e-6 && t < 1.0 - 1e-6);
            let p = Point::new(0.5, vec![y]);
            let hits = index_order(1)
                .into_iter()
                .filter(|i| lat(k, i).strip_contains(&p, hw))
                .count();
            prop_assert_eq!(hits, 1);
        }

        #[test]
        fn prop_periodic_squeeze_translation(y in -0.95f64..0.95) {
            let f = FieldDescriptor::PeriodicSqueeze {
                lattice: lat(1, &[0]),
                rate: 2.0,
                cutoff: Box::new(FieldDescriptor::Taper {
                    lo: vec![-10.0, -10.0],
                    hi: vec![10.0, 10.0],
                    margin: 1.0,
                }),
            };
            let a = f.eval_vec(&[0.0, y]);
            let b = f.eval_vec(&[0.0, y + 2.0]);
            prop_assert!((a[0] - b[0]).abs() < 1e-12);
        }
    }
}
