//! Generalized Gaussian randomizer and the law of its privacy-amplification
//! variable, obtained by inverting `y -> l_ε(y)` piece by piece.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::quadrature::integrate_adaptive;
use crate::numerics::roots::{minimize_golden, newton_bracketed};
use crate::numerics::special::{gamma_q, ln_gamma};

/// `ln(1e-300)`: densities below this are treated as zero.
const LN_NEGLIGIBLE: f64 = 690.0;
const BASE_GRID: usize = 4096;
const MAX_GRID: usize = 1 << 17;
/// Relative threshold below which consecutive differences of `l` count as flat.
const FLAT_TOL: f64 = 1e-10;
const PARALLEL_CHUNK: usize = 4096;

/// Location of a density: a single input value, or the blanket distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Loc {
    At(f64),
    Blanket,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GenGauss {
    pub beta: f64,
    pub c: f64,
    pub lo: f64,
    pub hi: f64,
    log_norm: f64,
    inv_beta: f64,
    pub gamma: f64,
    ln_gamma_mass: f64,
}

/// Tail position of a point relative to the median of a law: the tail mass
/// on the near side is stored directly to keep small probabilities exact.
#[derive(Debug, Clone, Copy)]
struct TailPoint {
    left: bool,
    tail: f64,
}

impl GenGauss {
    pub fn new(beta: f64, c: f64, lo: f64, hi: f64) -> Self {
        let inv_beta = 1.0 / beta;
        let log_norm = beta.ln() - 2f64.ln() - c.ln() - ln_gamma(inv_beta);
        let gamma = gamma_q(inv_beta, ((hi - lo) / (2.0 * c)).powf(beta));
        Self {
            beta,
            c,
            lo,
            hi,
            log_norm,
            inv_beta,
            gamma,
            ln_gamma_mass: gamma.ln(),
        }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn ln_pdf(&self, x: f64, y: f64) -> f64 {
        self.log_norm - ((y - x).abs() / self.c).powf(self.beta)
    }

    fn dln_pdf(&self, x: f64, y: f64) -> f64 {
        let d = y - x;
        if d == 0.0 {
            return 0.0;
        }
        -self.beta / self.c * d.signum() * (d.abs() / self.c).powf(self.beta - 1.0)
    }

    pub fn pdf(&self, x: f64, y: f64) -> f64 {
        self.ln_pdf(x, y).exp()
    }

    fn far_end(&self, y: f64) -> f64 {
        if y < self.mid() {
            self.hi
        } else {
            self.lo
        }
    }

    pub fn ln_blanket(&self, y: f64) -> f64 {
        self.ln_pdf(self.far_end(y), y) - self.ln_gamma_mass
    }

    pub fn ln_loc(&self, loc: Loc, y: f64) -> f64 {
        match loc {
            Loc::At(x) => self.ln_pdf(x, y),
            Loc::Blanket => self.ln_blanket(y),
        }
    }

    fn dln_loc(&self, loc: Loc, y: f64) -> f64 {
        match loc {
            Loc::At(x) => self.dln_pdf(x, y),
            Loc::Blanket => self.dln_pdf(self.far_end(y), y),
        }
    }

    /// `P(|Y - x| > t) / 2 / norm` style tail: `Q(1/β, (t/c)^β) / 2`.
    fn half_tail(&self, t: f64) -> f64 {
        if t.is_infinite() {
            return 0.0;
        }
        0.5 * gamma_q(self.inv_beta, (t.max(0.0) / self.c).powf(self.beta))
    }

    fn median(&self, loc: Loc) -> f64 {
        match loc {
            Loc::At(x) => x,
            Loc::Blanket => self.mid(),
        }
    }

    fn tail_point(&self, loc: Loc, y: f64) -> TailPoint {
        let med = self.median(loc);
        let left = y < med;
        let tail = match loc {
            Loc::At(x) => self.half_tail((y - x).abs()),
            Loc::Blanket => {
                if left {
                    self.half_tail(self.hi - y) / self.gamma
                } else {
                    self.half_tail(y - self.lo) / self.gamma
                }
            }
        };
        TailPoint { left, tail }
    }

    fn mass_between(a: TailPoint, b: TailPoint) -> f64 {
        let m = match (a.left, b.left) {
            (true, true) => b.tail - a.tail,
            (false, false) => a.tail - b.tail,
            (true, false) => 1.0 - a.tail - b.tail,
            (false, true) => 0.0,
        };
        m.max(0.0)
    }

    #[cfg(test)]
    fn cdf_loc(&self, loc: Loc, y: f64) -> f64 {
        let t = self.tail_point(loc, y);
        if t.left {
            t.tail
        } else {
            1.0 - t.tail
        }
    }

    pub fn mass_loc(&self, loc: Loc, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        Self::mass_between(self.tail_point(loc, a), self.tail_point(loc, b))
    }

    /// Half-width beyond which every density in play is below 1e-300.
    pub fn negligible_radius(&self) -> f64 {
        self.c * (LN_NEGLIGIBLE + self.log_norm.max(0.0)).powf(self.inv_beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PieceKind {
    Increasing,
    Decreasing,
    Flat(f64),
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    /// Piece bounds (the outermost pieces are unbounded).
    a: f64,
    b: f64,
    /// Finite search range and the values of `l` there.
    ya: f64,
    yb: f64,
    la: f64,
    lb: f64,
    kind: PieceKind,
}

/// `l_ε(y) = (φ_{x1}(y) − e^ε φ_{x1'}(y)) / R_ref(y)` for the generalized
/// Gaussian family, together with its piecewise-monotone structure under a
/// sampling law.
#[derive(Debug, Clone)]
pub(crate) struct GgPar {
    pub g: GenGauss,
    pub x1: f64,
    pub x1p: f64,
    pub reference: Loc,
    pub law: Loc,
    pub eps: f64,
    pieces: Vec<Piece>,
}

impl GgPar {
    /// Builds the model and detects monotone pieces, starting from `grid`
    /// points per smooth segment and doubling until the structure is stable.
    pub fn new(g: GenGauss, x1: f64, x1p: f64, reference: Loc, law: Loc, eps: f64) -> Result<Self> {
        let mut par = Self {
            g,
            x1,
            x1p,
            reference,
            law,
            eps,
            pieces: Vec::new(),
        };
        par.pieces = par.detect_pieces(BASE_GRID)?;
        Ok(par)
    }

    /// Pointwise model without the piece structure (CDF methods unusable).
    pub fn model_only(g: GenGauss, x1: f64, x1p: f64, reference: Loc, law: Loc, eps: f64) -> Self {
        Self {
            g,
            x1,
            x1p,
            reference,
            law,
            eps,
            pieces: Vec::new(),
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        let lr = self.g.ln_loc(self.reference, y);
        let t1 = self.g.ln_pdf(self.x1, y) - lr;
        let t2 = self.eps + self.g.ln_pdf(self.x1p, y) - lr;
        t1.exp() - t2.exp()
    }

    fn value_and_slope(&self, y: f64) -> (f64, f64) {
        let lr = self.g.ln_loc(self.reference, y);
        let dr = self.g.dln_loc(self.reference, y);
        let e1 = (self.g.ln_pdf(self.x1, y) - lr).exp();
        let e2 = (self.eps + self.g.ln_pdf(self.x1p, y) - lr).exp();
        let d1 = self.g.dln_pdf(self.x1, y) - dr;
        let d2 = self.g.dln_pdf(self.x1p, y) - dr;
        (e1 - e2, e1 * d1 - e2 * d2)
    }

    /// `l(y)^k` times the sampling-law density, evaluated in log space.
    pub fn moment_integrand(&self, k: i32, y: f64) -> f64 {
        let lr = self.g.ln_loc(self.reference, y);
        let lw = self.g.ln_loc(self.law, y);
        let t1 = self.g.ln_pdf(self.x1, y) - lr;
        let t2 = self.eps + self.g.ln_pdf(self.x1p, y) - lr;
        let m = t1.max(t2);
        let base = (t1 - m).exp() - (t2 - m).exp();
        if base == 0.0 {
            return 0.0;
        }
        let v = base.powi(k) * (k as f64 * m + lw).exp();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }

    /// `E_law[A^i B^j]`-integrand with `A = R_{x1}/R_ref`, `B = R_{x1'}/R_ref`.
    pub fn mixed_integrand(&self, i: i32, j: i32, y: f64) -> f64 {
        let lr = self.g.ln_loc(self.reference, y);
        let lw = self.g.ln_loc(self.law, y);
        let e = i as f64 * (self.g.ln_pdf(self.x1, y) - lr) + j as f64 * (self.g.ln_pdf(self.x1p, y) - lr) + lw;
        let v = e.exp();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }

    /// Points where `l` or the law density may fail to be smooth.
    pub fn kinks(&self) -> Vec<f64> {
        let mut pts = vec![self.x1, self.x1p];
        for loc in [self.reference, self.law] {
            match loc {
                Loc::At(x) => pts.push(x),
                Loc::Blanket => pts.push(self.g.mid()),
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn y_range(&self) -> (f64, f64) {
        let k = self.kinks();
        let lo = k[0].min(self.g.lo);
        let hi = k[k.len() - 1].max(self.g.hi);
        let r = self.g.negligible_radius();
        (lo - r, hi + r)
    }

    /// Raw moments `E[l^k]` for k = 1, 2, 3 under the sampling law.
    pub fn raw_moments(&self, rel_tol: f64) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (i, k) in (1..=3).enumerate() {
            out[i] = self.integrate(|y| self.moment_integrand(k, y), rel_tol)?;
        }
        Ok(out)
    }

    /// Integral over the real line split at the kinks.
    pub fn integrate<F: Fn(f64) -> f64 + Sync>(&self, f: F, rel_tol: f64) -> Result<f64> {
        let mut pts = vec![f64::NEG_INFINITY];
        pts.extend(self.kinks());
        pts.push(f64::INFINITY);
        let mut total = 0.0;
        for w in pts.windows(2) {
            if w[1] > w[0] {
                total += integrate_adaptive(&f, w[0], w[1], rel_tol, 1e-15)?.value;
            }
        }
        Ok(total)
    }

    fn is_flat_step(l0: f64, l1: f64) -> bool {
        (l1 - l0).abs() <= FLAT_TOL * l0.abs().max(l1.abs()).max(1e-300)
    }

    /// Interior extrema of `l` on one smooth segment, using `grid` samples.
    fn segment_extrema(&self, u: f64, v: f64, grid: usize) -> Vec<f64> {
        let step = (v - u) / (grid - 1) as f64;
        let ys: Vec<f64> = (0..grid).map(|i| u + step * i as f64).collect();
        let ls: Vec<f64> = ys.iter().map(|&y| self.value(y)).collect();
        let mut out = Vec::new();
        // (sign, index of the first sample of the last non-flat step)
        let mut last: Option<(f64, usize)> = None;
        for i in 0..grid - 1 {
            if Self::is_flat_step(ls[i], ls[i + 1]) {
                continue;
            }
            let s = (ls[i + 1] - ls[i]).signum();
            if let Some((prev, j)) = last {
                if prev != s {
                    // extremum between ys[j] and ys[i + 1]
                    let sign = if prev > 0.0 { -1.0 } else { 1.0 };
                    let tol = 1e-13 * (ys[j].abs() + self.g.c);
                    let (y, _) = minimize_golden(|y| sign * self.value(y), ys[j], ys[i + 1], tol);
                    out.push(y);
                }
            }
            last = Some((s, i));
        }
        out
    }

    fn detect_pieces(&self, base_grid: usize) -> Result<Vec<Piece>> {
        let (ylo, yhi) = self.y_range();
        let mut bounds = vec![ylo];
        bounds.extend(self.kinks().into_iter().filter(|&k| k > ylo && k < yhi));
        bounds.push(yhi);

        let mut cuts = vec![ylo];
        for w in bounds.windows(2) {
            let mut grid = base_grid;
            let ext = loop {
                let a = self.segment_extrema(w[0], w[1], grid);
                let b = self.segment_extrema(w[0], w[1], 2 * grid);
                if a.len() == b.len() {
                    break b;
                }
                grid *= 2;
                if grid > MAX_GRID {
                    return Err(Error::PieceDetection {
                        grid,
                        suggested: 2 * grid,
                    });
                }
            };
            cuts.extend(ext);
            cuts.push(w[1]);
        }
        cuts.dedup();

        let last = cuts.len() - 2;
        let mut pieces = Vec::with_capacity(cuts.len() - 1);
        for (i, w) in cuts.windows(2).enumerate() {
            let (ya, yb) = (w[0], w[1]);
            let la = self.value(ya);
            let lb = self.value(yb);
            let mid_val = self.value(0.5 * (ya + yb));
            let kind = if Self::is_flat_step(la, lb) && Self::is_flat_step(la, mid_val) {
                // use the end nearest the centre, where rounding is smallest
                PieceKind::Flat(if i == 0 { lb } else { la })
            } else if lb > la {
                PieceKind::Increasing
            } else {
                PieceKind::Decreasing
            };
            pieces.push(Piece {
                a: if i == 0 { f64::NEG_INFINITY } else { ya },
                b: if i == last { f64::INFINITY } else { yb },
                ya,
                yb,
                la,
                lb,
                kind,
            });
        }
        Ok(pieces)
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Values of `l` on flat pieces (atoms of the law).
    pub fn flat_values(&self) -> Vec<f64> {
        self.pieces
            .iter()
            .filter_map(|p| match p.kind {
                PieceKind::Flat(v) => Some(v),
                _ => None,
            })
            .collect()
    }

    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.pieces {
            lo = lo.min(p.la.min(p.lb));
            hi = hi.max(p.la.max(p.lb));
        }
        (lo, hi)
    }

    /// Point `y` of the piece where `l(y) = u`, or the relevant end when `u`
    /// lies outside the range of `l` on the piece. For increasing pieces the
    /// result bounds `{l <= u}` from the right, for decreasing from the left.
    fn preimage(&self, p: &Piece, u: f64, hint: f64) -> f64 {
        match p.kind {
            PieceKind::Flat(_) => unreachable!("flat pieces have no preimage"),
            PieceKind::Increasing => {
                if u < p.la {
                    p.a
                } else if u >= p.lb {
                    p.b
                } else {
                    newton_bracketed(
                        |y| {
                            let (l, dl) = self.value_and_slope(y);
                            (l - u, dl)
                        },
                        p.ya,
                        p.yb,
                        hint,
                    )
                }
            }
            PieceKind::Decreasing => {
                if u < p.lb {
                    p.b
                } else if u >= p.la {
                    p.a
                } else {
                    newton_bracketed(
                        |y| {
                            let (l, dl) = self.value_and_slope(y);
                            (l - u, dl)
                        },
                        p.ya,
                        p.yb,
                        hint,
                    )
                }
            }
        }
    }

    /// Preimages of ascending `us` on one piece, warm-starting each solve.
    fn preimages(&self, p: &Piece, us: &[f64]) -> Vec<f64> {
        let mut hint = 0.5 * (p.ya + p.yb);
        us.iter()
            .map(|&u| {
                let y = self.preimage(p, u, hint);
                if y.is_finite() && y > p.ya && y < p.yb {
                    hint = y;
                }
                y
            })
            .collect()
    }

    fn piece_mass(&self, p: &Piece) -> f64 {
        self.g.mass_loc(self.law, p.a, p.b)
    }

    pub fn cdf(&self, u: f64) -> f64 {
        let mut total = 0.0;
        for p in &self.pieces {
            total += match p.kind {
                PieceKind::Flat(v) => {
                    if v <= u {
                        self.piece_mass(p)
                    } else {
                        0.0
                    }
                }
                PieceKind::Increasing => self.g.mass_loc(self.law, p.a, self.preimage(p, u, 0.5 * (p.ya + p.yb))),
                PieceKind::Decreasing => self.g.mass_loc(self.law, self.preimage(p, u, 0.5 * (p.ya + p.yb)), p.b),
            };
        }
        total.clamp(0.0, 1.0)
    }

    pub fn sf(&self, u: f64) -> f64 {
        let mut total = 0.0;
        for p in &self.pieces {
            total += match p.kind {
                PieceKind::Flat(v) => {
                    if v > u {
                        self.piece_mass(p)
                    } else {
                        0.0
                    }
                }
                PieceKind::Increasing => self.g.mass_loc(self.law, self.preimage(p, u, 0.5 * (p.ya + p.yb)), p.b),
                PieceKind::Decreasing => self.g.mass_loc(self.law, p.a, self.preimage(p, u, 0.5 * (p.ya + p.yb))),
            };
        }
        total.clamp(0.0, 1.0)
    }

    /// `P(edges[i] < l <= edges[i+1])` for ascending edges, computed as law
    /// masses between preimages so small bins keep full relative precision.
    pub fn bin_masses(&self, edges: &[f64]) -> Vec<f64> {
        let nb = edges.len().saturating_sub(1);
        let mut out = vec![0.0; nb];
        if nb == 0 {
            return out;
        }
        for p in &self.pieces {
            match p.kind {
                PieceKind::Flat(v) => {
                    // bin i covers (edges[i], edges[i+1]]
                    let idx = edges.partition_point(|&e| e < v);
                    if idx >= 1 && idx <= nb {
                        out[idx - 1] += self.piece_mass(p);
                    }
                }
                _ => {
                    let masses = self.piece_bins(p, edges);
                    for (o, m) in out.iter_mut().zip(masses) {
                        *o += m;
                    }
                }
            }
        }
        out
    }

    fn piece_bins(&self, p: &Piece, edges: &[f64]) -> Vec<f64> {
        let law = self.law;
        let ys: Vec<f64> = edges
            .par_chunks(PARALLEL_CHUNK)
            .flat_map_iter(|us| self.preimages(p, us))
            .collect();
        let tails: Vec<TailPoint> = ys.par_iter().map(|&y| self.g.tail_point(law, y)).collect();
        tails
            .windows(2)
            .map(|w| match p.kind {
                PieceKind::Increasing => GenGauss::mass_between(w[0], w[1]),
                _ => GenGauss::mass_between(w[1], w[0]),
            })
            .collect()
    }

    /// Survival function at ascending points.
    pub fn sf_many(&self, us: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; us.len()];
        for p in &self.pieces {
            match p.kind {
                PieceKind::Flat(v) => {
                    let m = self.piece_mass(p);
                    for (o, &u) in out.iter_mut().zip(us) {
                        if v > u {
                            *o += m;
                        }
                    }
                }
                kind => {
                    let law = self.law;
                    let ys: Vec<f64> = us
                        .par_chunks(PARALLEL_CHUNK)
                        .flat_map_iter(|c| self.preimages(p, c))
                        .collect();
                    let end = if kind == PieceKind::Increasing { p.b } else { p.a };
                    let end_tp = self.g.tail_point(law, end);
                    let add: Vec<f64> = ys
                        .par_iter()
                        .map(|&y| {
                            let t = self.g.tail_point(law, y);
                            if kind == PieceKind::Increasing {
                                GenGauss::mass_between(t, end_tp)
                            } else {
                                GenGauss::mass_between(end_tp, t)
                            }
                        })
                        .collect();
                    for (o, m) in out.iter_mut().zip(add) {
                        *o += m;
                    }
                }
            }
        }
        for o in &mut out {
            *o = o.clamp(0.0, 1.0);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blanket_mass_and_median() {
        let g = GenGauss::new(1.0, 1.0, 0.0, 1.0);
        assert!((g.gamma - (-0.5f64).exp()).abs() < 1e-14);
        assert!((g.cdf_loc(Loc::Blanket, 0.5) - 0.5).abs() < 1e-14);
        assert!((g.cdf_loc(Loc::At(0.3), 0.3) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn law_masses_are_consistent() {
        let g = GenGauss::new(1.5, 0.7, 0.0, 1.0);
        for loc in [Loc::At(0.2), Loc::Blanket] {
            let m = g.mass_loc(loc, -1.0, 0.4) + g.mass_loc(loc, 0.4, 2.0);
            assert!((m - g.mass_loc(loc, -1.0, 2.0)).abs() < 1e-14);
            assert!((g.mass_loc(loc, f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gaussian_blanket_ref_is_single_piece() {
        let g = GenGauss::new(2.0, 2.0 * 2f64.sqrt(), 0.0, 1.0);
        let par = GgPar::new(g, 0.0, 1.0, Loc::Blanket, Loc::Blanket, 0.1).unwrap();
        // l is monotone here: every piece (split only at kinks) runs the same way
        assert!(
            par.pieces.iter().all(|p| p.kind == PieceKind::Decreasing),
            "{:?}",
            par.pieces
        );
        let c = par.cdf(0.0) + par.sf(0.0);
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_tails_are_atoms() {
        let g = GenGauss::new(1.0, 1.0, 0.0, 1.0);
        let par = GgPar::new(g, 0.0, 1.0, Loc::At(0.0), Loc::At(0.0), 0.2).unwrap();
        let flats = par.flat_values();
        assert_eq!(flats.len(), 2);
        // left of both inputs l = 1 - e^ε e^{-1}; right of both l = 1 - e^ε e^{1}
        let e = (0.2f64).exp();
        let mut expect = [1.0 - e * (-1.0f64).exp(), 1.0 - e * 1f64.exp()];
        expect.sort_by(f64::total_cmp);
        let mut got = flats.clone();
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn bin_masses_match_cdf_differences() {
        let g = GenGauss::new(1.5, 0.8, 0.0, 1.0);
        let par = GgPar::new(g, 0.0, 1.0, Loc::Blanket, Loc::At(0.0), 0.3).unwrap();
        let edges: Vec<f64> = (0..41).map(|i| -3.0 + 0.15 * i as f64).collect();
        let bins = par.bin_masses(&edges);
        for (i, m) in bins.iter().enumerate() {
            let d = par.cdf(edges[i + 1]) - par.cdf(edges[i]);
            assert!((m - d).abs() < 1e-12, "bin {i}: {m} vs {d}");
        }
        let sfs = par.sf_many(&edges);
        for (u, s) in edges.iter().zip(sfs) {
            assert!((s - par.sf(*u)).abs() < 1e-13);
            assert!((s + par.cdf(*u) - 1.0).abs() < 1e-12);
        }
    }
}
