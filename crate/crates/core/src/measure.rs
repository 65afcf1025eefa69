//! Order-parameter measures on `[0, 1]`.
//!
//! [`RsbMeasure`] is the atomic `(k, m, q)` form consumed by the PDE solver;
//! [`GeneralMeasure`] adds piecewise-linear density segments and is used for
//! full-RSB candidates (notably on the spherical side).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, GaussLegendre};

/// Atom locations closer than this are merged on construction.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Common read-only view of a probability measure on `[0, 1]`.
pub trait OrderParameter {
    /// Right-continuous distribution function `mu([0, u])`.
    fn cdf(&self, u: f64) -> f64;
    /// Left limit `mu([0, u))`.
    fn cdf_left(&self, u: f64) -> f64;
    /// Atoms as `(location, mass)` in increasing location.
    fn atom_list(&self) -> Vec<(f64, f64)>;
    /// Points where the distribution function changes its piecewise form.
    fn breakpoints(&self) -> Vec<f64>;
    /// `int f dmu`.
    fn expect(&self, f: &dyn Fn(f64) -> f64) -> f64;
    /// `x_hat(q) = int_q^1 mu([0, s]) ds`.
    fn tail_integral(&self, q: f64) -> f64;
}

/// `mu([0, u])` with a domain check.
pub fn cdf<M: OrderParameter + ?Sized>(measure: &M, u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain { value: u, domain: "[0, 1]" });
    }
    Ok(measure.cdf(u))
}

/// An atomic measure in the triplet form: `mu([0, q_p]) = m_p`.
///
/// ```
/// use parisi::{OrderParameter, RsbMeasure};
///
/// let mu = RsbMeasure::new(1, vec![0.0, 0.3, 1.0], vec![0.0, 0.0, 0.6, 1.0]).unwrap();
/// assert_eq!(mu.cdf(0.59), 0.3);
/// assert_eq!(mu.cdf(0.6), 1.0);
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct RsbMeasure {
    k: usize,
    m: Vec<f64>,
    q: Vec<f64>,
}

impl RsbMeasure {
    /// Validates `m = (m_0..m_{k+1})` and `q = (q_0..q_{k+2})`.
    pub fn new(k: usize, m: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if m.len() != k + 2 || q.len() != k + 3 {
            return Err(Error::InvalidMeasure(format!(
                "k = {k} needs {} masses and {} locations, got {} and {}",
                k + 2,
                k + 3,
                m.len(),
                q.len()
            )));
        }
        if m.iter().chain(&q).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::RangeViolation("entries of m and q must lie in [0, 1]".into()));
        }
        if m[0] != 0.0 || m[k + 1] != 1.0 {
            return Err(Error::RangeViolation("need m_0 = 0 and m_{k+1} = 1".into()));
        }
        if q[0] != 0.0 || q[k + 2] != 1.0 {
            return Err(Error::RangeViolation("need q_0 = 0 and q_{k+2} = 1".into()));
        }
        for p in 1..k {
            if m[p] >= m[p + 1] {
                return Err(Error::OrderingViolation(format!(
                    "m_{p} = {} is not below m_{} = {}",
                    m[p],
                    p + 1,
                    m[p + 1]
                )));
            }
        }
        if k >= 1 && m[k] > m[k + 1] {
            return Err(Error::OrderingViolation(format!("m_{k} exceeds 1")));
        }
        for p in 1..=k {
            if q[p + 1] < q[p] - ATOM_MERGE_TOL {
                return Err(Error::OrderingViolation(format!(
                    "q_{} = {} is below q_{p} = {}",
                    p + 1,
                    q[p + 1],
                    q[p]
                )));
            }
        }
        let mut mu = Self { k, m, q };
        mu.merge_close_atoms();
        Ok(mu)
    }

    fn merge_close_atoms(&mut self) {
        let mut p = 1;
        while p <= self.k {
            if self.q[p + 1] - self.q[p] < ATOM_MERGE_TOL {
                self.m.remove(p);
                self.q.remove(p + 1);
                self.k -= 1;
            } else {
                p += 1;
            }
        }
    }

    /// Point mass at `q`.
    pub fn dirac(q: f64) -> Result<Self> {
        Self::new(0, vec![0.0, 1.0], vec![0.0, q, 1.0])
    }

    /// Builds the measure from `(location, mass)` pairs. Masses are normalized when
    /// the total is within `1e-9` of one; zero-mass atoms are dropped.
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.iter().copied().filter(|&(_, w)| w > 0.0).collect();
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atom with positive mass".into()));
        }
        if atoms.iter().any(|&(q, w)| !(0.0..=1.0).contains(&q) || !w.is_finite()) {
            return Err(Error::RangeViolation("atom outside [0, 1]".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMeasure(format!("atom masses sum to {total}")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (q, w) in atoms {
            match merged.last_mut() {
                Some(last) if q - last.0 < ATOM_MERGE_TOL => last.1 += w,
                _ => merged.push((q, w)),
            }
        }
        let k = merged.len() - 1;
        let mut m = Vec::with_capacity(k + 2);
        let mut q = Vec::with_capacity(k + 3);
        m.push(0.0);
        q.push(0.0);
        let mut acc = 0.0;
        for (i, &(loc, w)) in merged.iter().enumerate() {
            acc += w / total;
            m.push(if i == k { 1.0 } else { acc.min(1.0) });
            q.push(loc);
        }
        q.push(1.0);
        Self::new(k, m, q)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `(m_0, ..., m_{k+1})`.
    pub fn m(&self) -> &[f64] {
        &self.m
    }

    /// `(q_0, ..., q_{k+2})`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Atom locations `q_1..q_{k+1}` with masses `m_p - m_{p-1}`, zero masses included.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        (1..=self.k + 1).map(|p| (self.q[p], self.m[p] - self.m[p - 1])).collect()
    }

    /// Constant levels of the distribution function: `(start, end, value)` triples
    /// covering `[0, 1]`, i.e. `x_mu = m_p` on `[q_p, q_{p+1})`.
    pub fn levels(&self) -> Vec<(f64, f64, f64)> {
        (0..=self.k + 1)
            .map(|p| (self.q[p], self.q[p + 1], self.m[p]))
            .filter(|&(a, b, _)| b > a)
            .collect()
    }

    /// Largest atom location with positive mass.
    pub fn q_max(&self) -> f64 {
        self.atoms().iter().rev().find(|a| a.1 > 0.0).map_or(0.0, |a| a.0)
    }

    /// Same measure expressed as a [`GeneralMeasure`] without density.
    pub fn to_general(&self) -> GeneralMeasure {
        GeneralMeasure {
            atoms: self.atoms().into_iter().filter(|a| a.1 > 0.0).collect(),
            density: Vec::new(),
        }
    }

    /// Pushes every atom `q -> q + t a(q)`.
    pub fn transport(&self, shift: impl Fn(f64) -> f64) -> Result<Self> {
        let atoms: Vec<(f64, f64)> = self
            .atoms()
            .into_iter()
            .map(|(q, w)| ((q + shift(q)).clamp(0.0, 1.0), w))
            .collect();
        Self::from_atoms(&atoms)
    }
}

impl OrderParameter for RsbMeasure {
    fn cdf(&self, u: f64) -> f64 {
        // Largest p with q_p <= u among p = 1..k+1.
        let mut value = 0.0;
        for p in 1..=self.k + 1 {
            if self.q[p] <= u {
                value = self.m[p];
            } else {
                break;
            }
        }
        value
    }

    fn cdf_left(&self, u: f64) -> f64 {
        let mut value = 0.0;
        for p in 1..=self.k + 1 {
            if self.q[p] < u {
                value = self.m[p];
            } else {
                break;
            }
        }
        value
    }

    fn atom_list(&self) -> Vec<(f64, f64)> {
        self.atoms()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.q[1..=self.k + 1].to_vec()
    }

    fn expect(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        self.atoms().iter().map(|&(q, w)| w * f(q)).sum()
    }

    fn tail_integral(&self, q: f64) -> f64 {
        self.atoms().iter().map(|&(a, w)| w * (1.0 - a.max(q)).max(0.0)).sum()
    }
}

/// One density segment: node values of a piecewise-linear density on a uniform
/// partition of `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySegment {
    pub a: f64,
    pub b: f64,
    pub values: Vec<f64>,
}

impl DensitySegment {
    fn cells(&self) -> usize {
        self.values.len() - 1
    }

    fn h(&self) -> f64 {
        (self.b - self.a) / self.cells() as f64
    }

    fn mass(&self) -> f64 {
        let h = self.h();
        self.values.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum()
    }

    /// `(cell index, offset)` for a point inside the segment.
    fn locate(&self, u: f64) -> (usize, f64) {
        let h = self.h();
        let i = (((u - self.a) / h).floor().max(0.0) as usize).min(self.cells() - 1);
        (i, (u - self.a - i as f64 * h).clamp(0.0, h))
    }

    fn cell_mass(&self, i: usize, s: f64) -> f64 {
        let h = self.h();
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        v0 * s + (v1 - v0) * s * s / (2.0 * h)
    }

    /// `int_0^s (x_i + t) rho(x_i + t) dt` within cell `i`.
    fn cell_moment(&self, i: usize, s: f64) -> f64 {
        let h = self.h();
        let x0 = self.a + i as f64 * h;
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        x0 * self.cell_mass(i, s) + v0 * s * s / 2.0 + (v1 - v0) * s * s * s / (3.0 * h)
    }

    /// `int_0^s C(x_i + t) dt` where `C` is the segment's own distribution function.
    fn cell_cdf_integral(&self, i: usize, c0: f64, s: f64) -> f64 {
        let h = self.h();
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        c0 * s + v0 * s * s / 2.0 + (v1 - v0) * s * s * s / (6.0 * h)
    }

    /// Mass of `[a, u]`.
    fn cdf(&self, u: f64) -> f64 {
        if u <= self.a {
            return 0.0;
        }
        if u >= self.b {
            return self.mass();
        }
        let (i, s) = self.locate(u);
        let h = self.h();
        let full: f64 = self.values[..=i].windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
        full + self.cell_mass(i, s)
    }

    /// `int_q^1 C(s) ds` with `C` the segment's distribution function.
    fn tail_integral(&self, q: f64) -> f64 {
        let total = self.mass();
        let mut acc = total * (1.0 - q.max(self.b)).max(0.0);
        if q < self.b {
            let h = self.h();
            let start = q.max(self.a);
            let (i0, s0) = self.locate(start);
            let mut c = 0.0;
            for i in 0..self.cells() {
                if i >= i0 {
                    let whole = self.cell_cdf_integral(i, c, h);
                    if i == i0 {
                        acc += whole - self.cell_cdf_integral(i, c, s0);
                    } else {
                        acc += whole;
                    }
                }
                c += self.cell_mass(i, h);
            }
        }
        acc
    }
}

/// A probability measure made of atoms and piecewise-linear density segments.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralMeasure {
    atoms: Vec<(f64, f64)>,
    density: Vec<DensitySegment>,
}

impl GeneralMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, density: Vec<DensitySegment>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().filter(|a| a.1 > 0.0).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (q, w) in atoms {
            if !(0.0..=1.0).contains(&q) || w > 1.0 + 1e-12 {
                return Err(Error::RangeViolation(format!("atom ({q}, {w}) out of range")));
            }
            match merged.last_mut() {
                Some(last) if q - last.0 < ATOM_MERGE_TOL => last.1 += w,
                _ => merged.push((q, w)),
            }
        }
        let mut density = density;
        density.sort_by(|x, y| x.a.total_cmp(&y.a));
        for seg in &density {
            if seg.values.len() < 2 || !(0.0 <= seg.a && seg.a < seg.b && seg.b <= 1.0) {
                return Err(Error::InvalidMeasure(format!(
                    "density segment [{}, {}] with {} values",
                    seg.a,
                    seg.b,
                    seg.values.len()
                )));
            }
            if seg.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidMeasure("negative density value".into()));
            }
        }
        for pair in density.windows(2) {
            if pair[1].a < pair[0].b {
                return Err(Error::InvalidMeasure("overlapping density segments".into()));
            }
        }
        let mu = Self { atoms: merged, density };
        let total = mu.total_mass();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
        }
        Ok(mu)
    }

    /// Point mass at `q`.
    pub fn dirac(q: f64) -> Self {
        Self { atoms: vec![(q, 1.0)], density: Vec::new() }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> &[DensitySegment] {
        &self.density
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.density_mass()
    }

    pub fn density_mass(&self) -> f64 {
        self.density.iter().map(DensitySegment::mass).sum()
    }

    /// Density value at `u`, zero outside the segments.
    pub fn density_at(&self, u: f64) -> f64 {
        for seg in &self.density {
            if u >= seg.a && u <= seg.b {
                let (i, s) = seg.locate(u);
                let h = seg.h();
                return seg.values[i] + (seg.values[i + 1] - seg.values[i]) * s / h;
            }
        }
        0.0
    }

    /// Smallest `q` with `mu([0, q]) = 1`, if it lies below one.
    pub fn saturation_point(&self) -> Option<f64> {
        let mut top: f64 = 0.0;
        for &(q, _) in &self.atoms {
            top = top.max(q);
        }
        for seg in &self.density {
            let last = seg.values.iter().rposition(|&v| v > 0.0);
            if let Some(j) = last {
                top = top.max((seg.a + (j + 1).min(seg.cells()) as f64 * seg.h()).min(seg.b));
            }
        }
        (top < 1.0).then_some(top)
    }

    /// Atoms in increasing order of mass-position and the density cells in a flat list.
    fn density_cells(&self) -> Vec<(&DensitySegment, usize)> {
        self.density
            .iter()
            .flat_map(|seg| (0..seg.cells()).map(move |i| (seg, i)))
            .collect()
    }
}

impl OrderParameter for GeneralMeasure {
    fn cdf(&self, u: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 <= u).map(|a| a.1).sum();
        let dens: f64 = self.density.iter().map(|s| s.cdf(u)).sum();
        (atoms + dens).min(1.0)
    }

    fn cdf_left(&self, u: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 < u).map(|a| a.1).sum();
        let dens: f64 = self.density.iter().map(|s| s.cdf(u)).sum();
        (atoms + dens).min(1.0)
    }

    fn atom_list(&self) -> Vec<(f64, f64)> {
        self.atoms.clone()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.atoms.iter().map(|a| a.0).collect();
        for seg in &self.density {
            let h = seg.h();
            pts.extend((0..=seg.cells()).map(|i| seg.a + i as f64 * h));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn expect(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        let gl = GaussLegendre::new(8);
        let atoms: f64 = self.atoms.iter().map(|&(q, w)| w * f(q)).sum();
        let dens: f64 = self
            .density_cells()
            .into_iter()
            .map(|(seg, i)| {
                let h = seg.h();
                let x0 = seg.a + i as f64 * h;
                let (v0, v1) = (seg.values[i], seg.values[i + 1]);
                gl.integrate(x0, x0 + h, |x| f(x) * (v0 + (v1 - v0) * (x - x0) / h))
            })
            .sum();
        atoms + dens
    }

    fn tail_integral(&self, q: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|&(a, w)| w * (1.0 - a.max(q)).max(0.0)).sum();
        atoms + self.density.iter().map(|s| s.tail_integral(q)).sum::<f64>()
    }
}

impl From<&RsbMeasure> for GeneralMeasure {
    fn from(mu: &RsbMeasure) -> Self {
        mu.to_general()
    }
}

/// `d(mu, nu) = int_0^1 |mu([0, u]) - nu([0, u])| du`.
///
/// Exact when both distribution functions are piecewise constant; otherwise each
/// piece between breakpoints is integrated adaptively.
pub fn metric_d<A: OrderParameter + ?Sized, B: OrderParameter + ?Sized>(mu: &A, nu: &B) -> f64 {
    let mut pts = vec![0.0, 1.0];
    pts.extend(mu.breakpoints());
    pts.extend(nu.breakpoints());
    pts.retain(|p| (0.0..=1.0).contains(p));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let atomic = is_atomic(mu) && is_atomic(nu);
    let diff = |u: f64| (mu.cdf(u) - nu.cdf(u)).abs();
    pts.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            if atomic {
                (b - a) * diff(0.5 * (a + b))
            } else {
                adaptive_simpson(&diff, a, b, 1e-15)
            }
        })
        .sum()
}

fn is_atomic<M: OrderParameter + ?Sized>(mu: &M) -> bool {
    let atoms: f64 = mu.atom_list().iter().map(|a| a.1).sum();
    (atoms - 1.0).abs() < 1e-14
}

/// Quantizes `g` into an atomic measure with at most `n` atoms.
///
/// Atoms of `g` are kept; the density mass is cut into `n - #atoms` slices of equal
/// mass, each replaced by an atom at its conditional mean.
pub fn discretize(g: &GeneralMeasure, n: usize) -> Result<RsbMeasure> {
    let n_atoms = g.atoms.len();
    let dens = g.density_mass();
    let needed = n_atoms + usize::from(dens > 0.0);
    if n == 0 || n < needed {
        return Err(Error::Capacity { atoms: needed, capacity: n });
    }
    let mut atoms = g.atoms.clone();
    if dens > 0.0 {
        let slices = n - n_atoms;
        let cells = g.density_cells();
        let target = dens / slices as f64;
        let mut slice_mass = 0.0;
        let mut slice_moment = 0.0;
        let mut produced = 0usize;
        for (seg, i) in cells {
            let h = seg.h();
            let mut s = 0.0;
            loop {
                let remaining_cell = seg.cell_mass(i, h) - seg.cell_mass(i, s);
                let want = target - slice_mass;
                if produced + 1 < slices && remaining_cell >= want && want > 0.0 {
                    let s_end = invert_cell_mass(seg, i, seg.cell_mass(i, s) + want, s, h);
                    slice_mass += want;
                    slice_moment += seg.cell_moment(i, s_end) - seg.cell_moment(i, s);
                    atoms.push((slice_moment / slice_mass, slice_mass));
                    produced += 1;
                    slice_mass = 0.0;
                    slice_moment = 0.0;
                    s = s_end;
                } else {
                    slice_mass += remaining_cell;
                    slice_moment += seg.cell_moment(i, h) - seg.cell_moment(i, s);
                    break;
                }
            }
        }
        if slice_mass > 0.0 {
            atoms.push((slice_moment / slice_mass, slice_mass));
        }
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let atoms: Vec<(f64, f64)> = atoms.into_iter().map(|(q, w)| (q.clamp(0.0, 1.0), w / total)).collect();
    RsbMeasure::from_atoms(&atoms)
}

fn invert_cell_mass(seg: &DensitySegment, i: usize, target: f64, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if seg.cell_mass(i, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    q: f64,
    mass: f64,
}

/// JSON layout shared by both measure types.
#[derive(Serialize, Deserialize)]
struct MeasureJson {
    atoms: Vec<AtomJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    density: Vec<DensitySegment>,
}

impl Serialize for RsbMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureJson {
            atoms: self.atoms().into_iter().map(|(q, mass)| AtomJson { q, mass }).collect(),
            density: Vec::new(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RsbMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = MeasureJson::deserialize(d)?;
        if !raw.density.is_empty() {
            return Err(D::Error::custom("atomic measure cannot carry density segments"));
        }
        let atoms: Vec<(f64, f64)> = raw.atoms.iter().map(|a| (a.q, a.mass)).collect();
        RsbMeasure::from_atoms(&atoms).map_err(D::Error::custom)
    }
}

impl Serialize for GeneralMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureJson {
            atoms: self.atoms.iter().map(|&(q, mass)| AtomJson { q, mass }).collect(),
            density: self.density.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeneralMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = MeasureJson::deserialize(d)?;
        Self::new(raw.atoms.iter().map(|a| (a.q, a.mass)).collect(), raw.density).map_err(D::Error::custom)
    }
}

impl GeneralMeasure {
    /// JSON document `{"atoms": [{"q", "mass"}], "density": [...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("measure serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        Self::deserialize(value).map_err(|e| Error::InvalidMeasure(e.to_string()))
    }
}
