//! Harmonic fill: every masked pixel converges to the mean of its
//! in-tile 4-neighbours.
//!
//! The solve runs in three stages on each channel:
//!
//! 1. A pull-push estimate: known values are averaged onto successively
//!    2×-coarser grids and the coarse values interpolated back into holes.
//! 2. Conjugate gradients preconditioned by multigrid V-cycles, until the
//!    largest Jacobi update would drop below `tol`. Coarse levels aggregate
//!    2×2 blocks and carry the Galerkin operator, so thin channels of the
//!    mask stay coupled exactly as on the tile.
//! 3. Plain Jacobi sweeps until the largest update is below `tol`.
//!
//! Before stage 3 each 4-connected hole is clamped to the range of the
//! known pixels bordering it. Jacobi averages never leave that range, so the
//! discrete maximum principle holds exactly for the result. `iters` bounds
//! the number of fine-grid sweeps over all stages.

use std::cell::RefCell;
use std::rc::Rc;

use crate::image::{DefectMask, RasterImage, CHANNELS};

use super::{check_request, Backend, BackendError, InpaintRequest, Restored};

pub const DEFAULT_ITERS: usize = 2000;
pub const DEFAULT_TOL: f64 = 1e-5;

/// Grids with at most this many pixels are not coarsened further.
const COARSEST: usize = 64;
const SMOOTH_STEPS: usize = 2;
const OMEGA: f64 = 0.8;
/// Scales coarse-grid corrections; piecewise-constant interpolation
/// under-corrects smooth errors.
const OVERCORRECT: f64 = 1.3;

#[derive(Debug, Clone, Copy)]
pub struct DiffusionBackend {
    pub iters: usize,
    pub tol: f64,
}

impl DiffusionBackend {
    pub fn new(iters: usize, tol: f64) -> Self {
        Self { iters, tol }
    }
}

impl Default for DiffusionBackend {
    fn default() -> Self {
        Self::new(DEFAULT_ITERS, DEFAULT_TOL)
    }
}

impl Backend for DiffusionBackend {
    fn name(&self) -> String {
        format!("diffusion(iters={}, tol={:e})", self.iters, self.tol)
    }

    fn inpaint(&self, req: &InpaintRequest<'_>) -> Result<Restored, BackendError> {
        inpaint_diffusion(req, self.iters, self.tol)
    }
}

pub fn inpaint_diffusion(req: &InpaintRequest<'_>, iters: usize, tol: f64) -> Result<Restored, BackendError> {
    check_request(req)?;
    if iters == 0 {
        return Err(BackendError::Config("diffusion needs at least one iteration".into()));
    }
    let (w, h) = req.tile.dims();
    let unknown: Vec<bool> = req.mask.data().iter().map(|&m| m != 0).collect();
    if !unknown.iter().any(|&u| u) {
        return Ok(Restored::unchanged(req.tile));
    }
    if unknown.iter().all(|&u| u) {
        return Ok(fill_with_mean(req.tile));
    }
    let setup = setup_for(req.mask, unknown);
    let Setup { grid, levels, holes } = &*setup;
    let mut ws = Workspace::new(w * h);
    let mut data = req.tile.data().to_vec();
    let mut iterations = 0;
    for c in 0..CHANNELS {
        let mut plane: Vec<f64> = data.iter().skip(c).step_by(CHANNELS).copied().collect();
        pull_push(&mut plane, grid);
        let used = pcg(&mut plane, grid, levels, &mut ws, tol, iters - 1);
        holes.clamp(&mut plane);
        iterations = iterations.max(used + jacobi(&mut plane, grid, tol, iters - used));
        for (i, v) in plane.into_iter().enumerate() {
            data[i * CHANNELS + c] = v;
        }
    }
    Ok(Restored {
        tile: RasterImage::from_raw_unchecked(w, h, data),
        no_boundary: false,
        clamped_pixels: 0,
        iterations,
    })
}

/// Solver structures that depend only on the mask.
struct Setup {
    grid: Grid,
    levels: Vec<Level>,
    holes: Holes,
}

thread_local! {
    /// The last mask seen on this thread with its setup; the frequency
    /// bands of a tile arrive one after another with the same mask.
    static LAST_SETUP: RefCell<Option<(DefectMask, Rc<Setup>)>> = const { RefCell::new(None) };
}

fn setup_for(mask: &DefectMask, unknown: Vec<bool>) -> Rc<Setup> {
    LAST_SETUP.with(|cell| {
        let mut last = cell.borrow_mut();
        if let Some((m, setup)) = last.as_ref() {
            if m == mask {
                return Rc::clone(setup);
            }
        }
        let (w, h) = mask.dims();
        let grid = Grid::new(w, h, unknown);
        let setup = Rc::new(Setup {
            levels: hierarchy(&grid),
            holes: Holes::new(&grid),
            grid,
        });
        *last = Some((mask.clone(), Rc::clone(&setup)));
        setup
    })
}

fn fill_with_mean(tile: &RasterImage) -> Restored {
    let (w, h) = tile.dims();
    let mut mean = [0.0; CHANNELS];
    for px in tile.data().chunks_exact(CHANNELS) {
        for c in 0..CHANNELS {
            mean[c] += px[c];
        }
    }
    let n = (w * h) as f64;
    mean.iter_mut().for_each(|m| *m = (*m / n).clamp(0.0, 1.0));
    Restored {
        tile: RasterImage::filled(w, h, mean).expect("non-empty tile"),
        no_boundary: true,
        clamped_pixels: 0,
        iterations: 0,
    }
}

fn neighbours4(i: usize, w: usize, h: usize) -> [Option<usize>; 4] {
    let (x, y) = (i % w, i / w);
    [
        (y > 0).then(|| i - w),
        (x + 1 < w).then(|| i + 1),
        (y + 1 < h).then(|| i + w),
        (x > 0).then(|| i - 1),
    ]
}

/// The tile grid. `edge` lists unknown pixels on the tile border with their
/// in-tile neighbours.
struct Grid {
    w: usize,
    h: usize,
    unknown: Vec<bool>,
    /// 1 on unknown pixels, 0 elsewhere.
    sel: Vec<f64>,
    /// In-tile neighbour count on unknown pixels, 0 elsewhere.
    weight: Vec<f64>,
    edge: Vec<(usize, Vec<usize>)>,
}

impl Grid {
    fn new(w: usize, h: usize, unknown: Vec<bool>) -> Self {
        let edge: Vec<(usize, Vec<usize>)> = (0..w * h)
            .filter(|&i| unknown[i] && (i % w == 0 || i / w == 0 || i % w + 1 == w || i / w + 1 == h))
            .map(|i| (i, neighbours4(i, w, h).into_iter().flatten().collect()))
            .collect();
        let sel: Vec<f64> = unknown.iter().map(|&u| if u { 1.0 } else { 0.0 }).collect();
        let mut weight: Vec<f64> = sel.iter().map(|s| 4.0 * s).collect();
        for (i, nb) in &edge {
            weight[*i] = nb.len() as f64;
        }
        Self { w, h, unknown, sel, weight, edge }
    }
}

fn edge_mean(u: &[f64], nb: &[usize]) -> f64 {
    match nb {
        [a, b] => (u[*a] + u[*b]) * 0.5,
        rest => rest.iter().map(|&j| u[j]).sum::<f64>() / rest.len() as f64,
    }
}

/// Plain Jacobi: unknown pixels take the exact neighbour mean. Returns the
/// sweep count.
fn jacobi(u: &mut Vec<f64>, grid: &Grid, tol: f64, iters: usize) -> usize {
    let mut next = u.clone();
    for sweep in 1..=iters {
        let max = jacobi_sweep(grid, u, &mut next);
        std::mem::swap(u, &mut next);
        if max < tol {
            return sweep;
        }
    }
    iters
}

fn jacobi_sweep(grid: &Grid, u: &[f64], dst: &mut [f64]) -> f64 {
    let w = grid.w;
    let mut max = 0.0f64;
    if w >= 3 {
        let mut diff = vec![0.0; w - 2];
        for y in 1..grid.h.saturating_sub(1) {
            let row = y * w;
            let r = row + 1..row + w - 1;
            let (mid, up, down) = (&u[r.clone()], &u[row + 1 - w..row - 1], &u[row + 1 + w..row + 2 * w - 1]);
            let (left, right) = (&u[row..row + w - 2], &u[row + 2..row + w]);
            let out = &mut dst[r.clone()];
            let n = out.len();
            let (mid, up, down, left, right, sel) = (&mid[..n], &up[..n], &down[..n], &left[..n], &right[..n], &grid.sel[r][..n]);
            let diff = &mut diff[..n];
            for i in 0..n {
                let m = ((up[i] + right[i]) + (down[i] + left[i])) * 0.25;
                let v = if sel[i] != 0.0 { m } else { mid[i] };
                out[i] = v;
                diff[i] = v - mid[i];
            }
            max = max.max(max_abs(&diff));
        }
    }
    for (i, nb) in &grid.edge {
        let m = edge_mean(u, nb);
        dst[*i] = m;
        max = max.max((m - u[*i]).abs());
    }
    max
}

/// Fills unknown pixels from averages of known pixels on successively
/// 2×-coarser grids, interpolated back bilinearly.
fn pull_push(plane: &mut [f64], grid: &Grid) {
    let mut dims = vec![(grid.w, grid.h)];
    let mut vals = vec![plane.to_vec()];
    let mut known = vec![grid.unknown.iter().map(|&u| !u).collect::<Vec<bool>>()];
    while let Some(&(w, h)) = dims.last() {
        if w * h <= COARSEST || (w <= 2 && h <= 2) {
            break;
        }
        let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
        let mut sum = vec![0.0; cw * ch];
        let mut n = vec![0u32; cw * ch];
        let (fv, fk) = (vals.last().expect("non-empty"), known.last().expect("non-empty"));
        for (i, &kn) in fk.iter().enumerate() {
            if kn {
                let j = (i / w / 2) * cw + (i % w) / 2;
                sum[j] += fv[i];
                n[j] += 1;
            }
        }
        vals.push(sum.iter().zip(&n).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect());
        known.push(n.iter().map(|&n| n > 0).collect());
        dims.push((cw, ch));
    }
    let top = dims.len() - 1;
    let (s, n) = vals[top]
        .iter()
        .zip(&known[top])
        .filter(|(_, &k)| k)
        .fold((0.0, 0.0), |(s, n), (v, _)| (s + v, n + 1.0));
    let mean = if n > 0.0 { s / n } else { 0.5 };
    for (v, &kn) in vals[top].iter_mut().zip(&known[top]) {
        if !kn {
            *v = mean;
        }
    }
    for k in (0..top).rev() {
        let ((w, h), (cw, ch)) = (dims[k], dims[k + 1]);
        let up = prolong_bilinear(&vals[k + 1], cw, ch, w, h);
        for (i, v) in vals[k].iter_mut().enumerate() {
            if !known[k][i] {
                *v = up[i];
            }
        }
    }
    plane.copy_from_slice(&vals[0]);
}

/// Bilinear interpolation from the 2×-coarser grid, whose pixel `c` is
/// centred on fine coordinate `2c + 0.5`.
fn prolong_bilinear(coarse: &[f64], cw: usize, ch: usize, w: usize, h: usize) -> Vec<f64> {
    let taps = |x: usize, n: usize| -> (usize, usize) {
        let c = x / 2;
        let other = if x % 2 == 0 { c.saturating_sub(1) } else { (c + 1).min(n - 1) };
        (c, other)
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = taps(y, ch);
        for x in 0..w {
            let (x0, x1) = taps(x, cw);
            let v = |cx: usize, cy: usize| coarse[cy * cw + cx];
            let top = v(x0, y0) + 0.25 * (v(x1, y0) - v(x0, y0));
            let bottom = v(x0, y1) + 0.25 * (v(x1, y1) - v(x0, y1));
            out[y * w + x] = top + 0.25 * (bottom - top);
        }
    }
    out
}

/// One coarse multigrid level: a 5-point operator
/// `A u = diag·u + Σ coef·u_nbr` on a grid with a one-pixel zero border.
/// Each level aggregates 2×2 blocks of the finer one and carries the
/// Galerkin operator of piecewise-constant interpolation, which couples
/// only pixels that are unknown on the finer level. The finest operator is
/// `A u = u − mean(u)` on the tile's unknown pixels.
struct Level {
    w: usize,
    h: usize,
    pw: usize,
    unknown: Vec<bool>,
    diag: Vec<f64>,
    /// North, east, south, west.
    coef: [Vec<f64>; 4],
    /// `OMEGA/diag` on unknown pixels, 0 elsewhere.
    step: Vec<f64>,
    /// 1 on unknown pixels, 0 elsewhere.
    sel: Vec<f64>,
}

impl Level {
    fn empty(w: usize, h: usize) -> Self {
        let n = (w + 2) * (h + 2);
        Self {
            w,
            h,
            pw: w + 2,
            unknown: vec![false; n],
            diag: vec![0.0; n],
            coef: std::array::from_fn(|_| vec![0.0; n]),
            step: vec![0.0; n],
            sel: vec![0.0; n],
        }
    }

    fn at(&self, x: usize, y: usize) -> usize {
        (y + 1) * self.pw + x + 1
    }

    fn finish(mut self) -> Self {
        for i in 0..self.unknown.len() {
            if self.unknown[i] {
                self.step[i] = OMEGA / self.diag[i];
                self.sel[i] = 1.0;
            } else {
                self.diag[i] = 1.0;
            }
        }
        self
    }

    /// Aggregates the tile operator.
    fn from_grid(grid: &Grid) -> Self {
        let (w, h) = (grid.w, grid.h);
        let mut c = Self::empty(w.div_ceil(2), h.div_ceil(2));
        for i in (0..w * h).filter(|&i| grid.unknown[i]) {
            let (x, y) = (i % w, i / w);
            let j = c.at(x / 2, y / 2);
            c.unknown[j] = true;
            c.diag[j] += 1.0;
            let nb = neighbours4(i, w, h);
            let inv = 1.0 / nb.iter().flatten().count() as f64;
            for (d, n) in nb.iter().enumerate() {
                if let Some(k) = *n {
                    if grid.unknown[k] {
                        c.couple(j, d, (k % w / 2, k / w / 2) == (x / 2, y / 2), -inv);
                    }
                }
            }
        }
        c.finish()
    }

    fn couple(&mut self, j: usize, d: usize, same: bool, v: f64) {
        if same {
            self.diag[j] += v;
        } else {
            self.coef[d][j] += v;
        }
    }

    fn coarsen(&self) -> Self {
        let mut c = Self::empty(self.w.div_ceil(2), self.h.div_ceil(2));
        for y in 0..self.h {
            for x in 0..self.w {
                let i = self.at(x, y);
                if !self.unknown[i] {
                    continue;
                }
                let j = c.at(x / 2, y / 2);
                c.unknown[j] = true;
                c.diag[j] += self.diag[i];
                let nbr = [
                    (i - self.pw, y.wrapping_sub(1) / 2 == y / 2 && y > 0),
                    (i + 1, (x + 1) / 2 == x / 2),
                    (i + self.pw, (y + 1) / 2 == y / 2),
                    (i - 1, x.wrapping_sub(1) / 2 == x / 2 && x > 0),
                ];
                for (d, &(k, same)) in nbr.iter().enumerate() {
                    if self.unknown[k] && self.coef[d][i] != 0.0 {
                        c.couple(j, d, same, self.coef[d][i]);
                    }
                }
            }
        }
        c.finish()
    }

    /// `f − A u`, zero on known pixels.
    fn residual(&self, u: &[f64], f: &[f64], r: &mut [f64]) {
        let (pw, w) = (self.pw, self.w);
        let [cn, ce, cs, cwst] = &self.coef;
        for y in 1..=self.h {
            let a = y * pw + 1;
            let rg = a..a + w;
            let (uc, un, us) = (&u[rg.clone()], &u[a - pw..a - pw + w], &u[a + pw..a + pw + w]);
            let (ue, uw) = (&u[a + 1..a + 1 + w], &u[a - 1..a - 1 + w]);
            let (dg, n, e, s, wc) = (&self.diag[rg.clone()], &cn[rg.clone()], &ce[rg.clone()], &cs[rg.clone()], &cwst[rg.clone()]);
            let (fr, st) = (&f[rg.clone()], &self.step[rg.clone()]);
            let out = &mut r[rg];
            let (uc, un, us, ue, uw, dg, n, e, s, wc, fr, st) = (&uc[..w], &un[..w], &us[..w], &ue[..w], &uw[..w], &dg[..w], &n[..w], &e[..w], &s[..w], &wc[..w], &fr[..w], &st[..w]);
            let out = &mut out[..w];
            for i in 0..w {
                let au = dg[i] * uc[i] + (n[i] * un[i] + e[i] * ue[i]) + (s[i] * us[i] + wc[i] * uw[i]);
                out[i] = if st[i] != 0.0 { fr[i] - au } else { 0.0 };
            }
        }
    }

    /// One damped-Jacobi step from `u` into `dst`.
    fn relax(&self, u: &[f64], f: &[f64], dst: &mut [f64]) {
        let (pw, w) = (self.pw, self.w);
        let [cn, ce, cs, cwst] = &self.coef;
        for y in 1..=self.h {
            let a = y * pw + 1;
            let rg = a..a + w;
            let (uc, un, us) = (&u[rg.clone()], &u[a - pw..a - pw + w], &u[a + pw..a + pw + w]);
            let (ue, uw) = (&u[a + 1..a + 1 + w], &u[a - 1..a - 1 + w]);
            let (dg, n, e, s, wc) = (&self.diag[rg.clone()], &cn[rg.clone()], &ce[rg.clone()], &cs[rg.clone()], &cwst[rg.clone()]);
            let (fr, st) = (&f[rg.clone()], &self.step[rg.clone()]);
            let out = &mut dst[rg];
            let (uc, un, us, ue, uw, dg, n, e, s, wc, fr, st) = (&uc[..w], &un[..w], &us[..w], &ue[..w], &uw[..w], &dg[..w], &n[..w], &e[..w], &s[..w], &wc[..w], &fr[..w], &st[..w]);
            let out = &mut out[..w];
            for i in 0..w {
                let au = dg[i] * uc[i] + (n[i] * un[i] + e[i] * ue[i]) + (s[i] * us[i] + wc[i] * uw[i]);
                out[i] = uc[i] + (fr[i] - au) * st[i];
            }
        }
    }
}

fn hierarchy(grid: &Grid) -> Vec<Level> {
    if grid.w * grid.h <= COARSEST || (grid.w <= 2 && grid.h <= 2) {
        return Vec::new();
    }
    let mut levels = vec![Level::from_grid(grid)];
    loop {
        let f = levels.last().expect("non-empty");
        if f.w * f.h <= COARSEST || (f.w <= 2 && f.h <= 2) {
            break;
        }
        let c = f.coarsen();
        levels.push(c);
    }
    levels
}

/// Adds pairs of a fine row onto a coarse row.
fn restrict_row(fine: &[f64], coarse: &mut [f64]) {
    let pairs = fine.chunks_exact(2);
    let tail = pairs.remainder();
    let n = fine.len() / 2;
    for (c, p) in coarse[..n].iter_mut().zip(pairs) {
        *c += p[0] + p[1];
    }
    if let [t] = tail {
        coarse[n] += t;
    }
}

/// Adds the scaled coarse correction to the unknown pixels of a fine row.
fn prolong_row(coarse: &[f64], sel: &[f64], fine: &mut [f64]) {
    for (x, (v, s)) in fine.iter_mut().zip(sel).enumerate() {
        *v += OVERCORRECT * s * coarse[x / 2];
    }
}

/// One V-cycle for `A e = f` on coarse level `k`.
fn v_cycle(levels: &[Level], k: usize, e: &mut Vec<f64>, f: &[f64]) {
    let lv = &levels[k];
    let mut scratch = e.clone();
    let last = k + 1 == levels.len();
    for _ in 0..if last { 8 * (lv.w + lv.h) } else { SMOOTH_STEPS } {
        lv.relax(e, f, &mut scratch);
        std::mem::swap(e, &mut scratch);
    }
    if last {
        return;
    }
    let mut r = vec![0.0; e.len()];
    lv.residual(e, f, &mut r);
    let c = &levels[k + 1];
    let mut rc = vec![0.0; c.unknown.len()];
    for y in 0..lv.h {
        let a = lv.at(0, y);
        restrict_row(&r[a..a + lv.w], &mut rc[c.at(0, y / 2)..]);
    }
    let mut ec = vec![0.0; rc.len()];
    v_cycle(levels, k + 1, &mut ec, &rc);
    for y in 0..lv.h {
        let a = lv.at(0, y);
        prolong_row(&ec[c.at(0, y / 2)..], &lv.sel[a..a + lv.w], &mut e[a..a + lv.w]);
    }
    for _ in 0..SMOOTH_STEPS {
        lv.relax(e, f, &mut scratch);
        std::mem::swap(e, &mut scratch);
    }
}

/// `mean(u) − u` on unknown pixels, 0 elsewhere; returns its largest
/// magnitude.
fn residual_fine(grid: &Grid, u: &[f64], r: &mut [f64]) -> f64 {
    let (w, h) = (grid.w, grid.h);
    if w >= 3 && h >= 3 {
        r[..w].fill(0.0);
        r[(h - 1) * w..].fill(0.0);
        for y in 1..h - 1 {
            let row = y * w;
            let rg = row + 1..row + w - 1;
            let (mid, up, down) = (&u[rg.clone()], &u[row + 1 - w..row - 1], &u[row + 1 + w..row + 2 * w - 1]);
            let (left, right) = (&u[row..row + w - 2], &u[row + 2..row + w]);
            r[row] = 0.0;
            r[row + w - 1] = 0.0;
            let out = &mut r[rg.clone()];
            let n = out.len();
            let (mid, up, down, left, right, sel) = (&mid[..n], &up[..n], &down[..n], &left[..n], &right[..n], &grid.sel[rg][..n]);
            for i in 0..n {
                let m = ((up[i] + right[i]) + (down[i] + left[i])) * 0.25;
                out[i] = sel[i] * (m - mid[i]);
            }
        }
    } else {
        r.fill(0.0);
    }
    for (i, nb) in &grid.edge {
        r[*i] = edge_mean(u, nb) - u[*i];
    }
    max_abs(r)
}

/// Largest magnitude in a slice, 0 when empty.
fn max_abs(v: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let chunks = v.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..4 {
            let a = c[k].abs();
            lanes[k] = if a > lanes[k] { a } else { lanes[k] };
        }
    }
    tail.iter().chain(&lanes).fold(0.0f64, |m, &a| if a.abs() > m { a.abs() } else { m })
}

/// Damped Jacobi for `e − mean(e) = f` on the tile.
fn relax_fine_rhs(grid: &Grid, e: &[f64], f: &[f64], dst: &mut [f64]) {
    let w = grid.w;
    if w >= 3 {
        for y in 1..grid.h.saturating_sub(1) {
            let row = y * w;
            let r = row + 1..row + w - 1;
            let (mid, up, down) = (&e[r.clone()], &e[row + 1 - w..row - 1], &e[row + 1 + w..row + 2 * w - 1]);
            let (left, right) = (&e[row..row + w - 2], &e[row + 2..row + w]);
            let (sel, fr) = (&grid.sel[r.clone()], &f[r.clone()]);
            let out = &mut dst[r];
            let n = out.len();
            let (mid, up, down, left, right, sel, fr) = (&mid[..n], &up[..n], &down[..n], &left[..n], &right[..n], &sel[..n], &fr[..n]);
            for i in 0..n {
                let m = ((up[i] + right[i]) + (down[i] + left[i])) * 0.25;
                out[i] = mid[i] + OMEGA * sel[i] * (fr[i] + m - mid[i]);
            }
        }
    }
    for (i, nb) in &grid.edge {
        dst[*i] = e[*i] + OMEGA * (f[*i] + edge_mean(e, nb) - e[*i]);
    }
}

/// Work arrays for [`pcg`], reusable across channels: every entry is
/// written before it is read, and entries on known pixels stay 0.
struct Workspace {
    r: Vec<f64>,
    r_old: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    t: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let v = || vec![0.0; n];
        Self {
            r: v(),
            r_old: v(),
            z: v(),
            p: v(),
            q: v(),
            t: v(),
            scratch: v(),
        }
    }
}

/// One V-cycle approximating `z = B⁻¹ r` with `B e = e − mean(e)` on
/// unknown pixels; `z` is 0 on known pixels.
fn precondition(grid: &Grid, levels: &[Level], r: &[f64], z: &mut Vec<f64>, t: &mut [f64], scratch: &mut Vec<f64>) {
    let c = &levels[0];
    let (w, h) = (grid.w, grid.h);
    z.iter_mut().zip(r).zip(&grid.sel).for_each(|((z, r), s)| *z = OMEGA * s * r);
    for _ in 1..SMOOTH_STEPS {
        relax_fine_rhs(grid, z, r, scratch);
        std::mem::swap(z, scratch);
    }
    residual_fine(grid, z, t);
    t.iter_mut().zip(r).for_each(|(t, r)| *t += r);
    let mut rc = vec![0.0; c.unknown.len()];
    for y in 0..h {
        restrict_row(&t[y * w..(y + 1) * w], &mut rc[c.at(0, y / 2)..]);
    }
    let mut ec = vec![0.0; rc.len()];
    v_cycle(levels, 0, &mut ec, &rc);
    for y in 0..h {
        let rg = y * w..(y + 1) * w;
        prolong_row(&ec[c.at(0, y / 2)..], &grid.sel[rg.clone()], &mut z[rg]);
    }
    for _ in 0..SMOOTH_STEPS {
        relax_fine_rhs(grid, z, r, scratch);
        std::mem::swap(z, scratch);
    }
}

/// `Σ wt·a·b`.
fn dot(wt: &[f64], a: &[f64], b: &[f64]) -> f64 {
    wt.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Flexible conjugate gradients on `u − mean(u) = 0` over the unknown
/// pixels, preconditioned by V-cycles, until the largest Jacobi update
/// would be below `tol`. Inner products are weighted by neighbour count,
/// under which the operator is self-adjoint. Returns the fine-grid sweeps
/// spent; stops early when an iteration fails to reduce that update.
fn pcg(u: &mut [f64], grid: &Grid, levels: &[Level], ws: &mut Workspace, tol: f64, iters: usize) -> usize {
    if levels.is_empty() {
        return 0;
    }
    let cost = 2 * SMOOTH_STEPS + 2;
    let mut best = residual_fine(grid, u, &mut ws.r);
    if best < tol || cost > iters {
        return 0;
    }
    precondition(grid, levels, &ws.r, &mut ws.z, &mut ws.t, &mut ws.scratch);
    ws.p.copy_from_slice(&ws.z);
    let mut rz = dot(&grid.weight, &ws.r, &ws.z);
    let mut sweeps = 0;
    while sweeps + cost <= iters {
        sweeps += cost;
        residual_fine(grid, &ws.p, &mut ws.q);
        ws.q.iter_mut().for_each(|q| *q = -*q);
        let pq = dot(&grid.weight, &ws.p, &ws.q);
        if !(pq > 0.0 && rz > 0.0) {
            break;
        }
        let alpha = rz / pq;
        u.iter_mut().zip(&ws.p).for_each(|(u, p)| *u += alpha * p);
        std::mem::swap(&mut ws.r, &mut ws.r_old);
        let now = residual_fine(grid, u, &mut ws.r);
        if !(now < best) {
            u.iter_mut().zip(&ws.p).for_each(|(u, p)| *u -= alpha * p);
            break;
        }
        best = now;
        if best < tol {
            break;
        }
        precondition(grid, levels, &ws.r, &mut ws.z, &mut ws.t, &mut ws.scratch);
        ws.t.iter_mut().zip(&ws.r).zip(&ws.r_old).for_each(|((t, r), o)| *t = r - o);
        let beta = dot(&grid.weight, &ws.z, &ws.t) / rz;
        rz = dot(&grid.weight, &ws.r, &ws.z);
        ws.p.iter_mut().zip(&ws.z).for_each(|(p, z)| *p = z + beta * *p);
    }
    sweeps
}

/// Per 4-connected hole, the range of the known pixels bordering it.
struct Holes {
    members: Vec<Vec<usize>>,
    border: Vec<Vec<usize>>,
}

impl Holes {
    fn new(grid: &Grid) -> Self {
        let (w, h) = (grid.w, grid.h);
        let mut label = vec![usize::MAX; w * h];
        let (mut members, mut border) = (Vec::new(), Vec::new());
        let mut stack = Vec::new();
        for start in 0..w * h {
            if !grid.unknown[start] || label[start] != usize::MAX {
                continue;
            }
            let id = members.len();
            let (mut m, mut b) = (Vec::new(), Vec::new());
            label[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                m.push(i);
                for j in neighbours4(i, w, h).into_iter().flatten() {
                    if !grid.unknown[j] {
                        b.push(j);
                    } else if label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
            members.push(m);
            border.push(b);
        }
        Self { members, border }
    }

    /// Clamps each hole of `plane` to the range of its border values.
    fn clamp(&self, plane: &mut [f64]) {
        for (m, b) in self.members.iter().zip(&self.border) {
            let lo = b.iter().map(|&j| plane[j]).fold(f64::INFINITY, f64::min);
            let hi = b.iter().map(|&j| plane[j]).fold(f64::NEG_INFINITY, f64::max);
            for &i in m {
                plane[i] = plane[i].clamp(lo, hi);
            }
        }
    }
}
