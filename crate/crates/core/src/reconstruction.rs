//! Branch geometry from tracked positions: interpolating B-spline curves,
//! rasterization, thinning, and skeleton measurements.

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Row-major binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    /// Panics if `data.len() != width * height`.
    pub fn from_pixels(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "mask data does not match its size");
        Mask { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[bool] {
        &self.data
    }

    /// Out-of-bounds reads are background.
    pub fn get(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.data[y as usize * self.width + x as usize]
    }

    /// Out-of-bounds writes are ignored.
    pub fn set(&mut self, x: i64, y: i64, value: bool) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.data[y as usize * self.width + x as usize] = value;
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&p| p).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&p| p)
    }

    /// Set pixels in raster order.
    pub fn iter_set(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(move |(k, _)| ((k % self.width) as i64, (k / self.width) as i64))
    }

    /// Neighbours clockwise from north: N, NE, E, SE, S, SW, W, NW.
    fn ring(&self, x: i64, y: i64) -> [bool; 8] {
        RING.map(|(dx, dy)| self.get(x + dx, y + dy))
    }

    pub fn neighbour_count(&self, x: i64, y: i64) -> usize {
        self.ring(x, y).iter().filter(|&&b| b).count()
    }
}

const RING: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

/// A fitted curve; `degenerate` is set when all control points coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFit {
    pub polyline: Vec<(f64, f64)>,
    pub degenerate: bool,
}

/// Clamped interpolating B-spline through `points` (branch point first,
/// then bud positions in time order), sampled uniformly in parameter.
///
/// Uses cubic degree, reduced to `points - 1` when fewer than four distinct
/// consecutive points remain. Parameters follow chord length and interior
/// knots are averaged from them.
pub fn fit_branch_curve(points: &[(f64, f64)], samples: usize) -> Result<CurveFit> {
    let mut q: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        if q.last() != Some(&p) {
            q.push(p);
        }
    }
    match q.len() {
        0 => return Err(Error::InvalidInput("curve fit needs at least one point".into())),
        1 => {
            return Ok(CurveFit {
                polyline: q,
                degenerate: true,
            })
        }
        _ => {}
    }
    if samples < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {samples}")));
    }
    let n = q.len() - 1;
    let degree = n.min(3);

    let chords: Vec<f64> = q.windows(2).map(|w| dist(w[0], w[1])).collect();
    let total: f64 = chords.iter().sum();
    let mut params = Vec::with_capacity(n + 1);
    params.push(0.0);
    let mut acc = 0.0;
    for c in &chords[..n - 1] {
        acc += c;
        params.push(acc / total);
    }
    params.push(1.0);

    let mut knots = vec![0.0; degree + 1];
    for j in 1..=(n - degree) {
        knots.push(params[j..j + degree].iter().sum::<f64>() / degree as f64);
    }
    knots.extend(std::iter::repeat_n(1.0, degree + 1));

    let mut system = vec![vec![0.0; n + 1]; n + 1];
    for (k, &u) in params.iter().enumerate() {
        let span = find_span(n, degree, u, &knots);
        for (r, b) in basis_funs(span, u, degree, &knots).into_iter().enumerate() {
            system[k][span - degree + r] = b;
        }
    }
    let xs = solve(system.clone(), q.iter().map(|p| p.0).collect())?;
    let ys = solve(system, q.iter().map(|p| p.1).collect())?;
    let mut control: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
    // Clamped ends interpolate exactly; pin them against solver round-off.
    control[0] = q[0];
    control[n] = q[n];

    let polyline = (0..samples)
        .map(|s| {
            let u = s as f64 / (samples - 1) as f64;
            let span = find_span(n, degree, u, &knots);
            let basis = basis_funs(span, u, degree, &knots);
            basis.iter().enumerate().fold((0.0, 0.0), |(x, y), (r, b)| {
                let c = control[span - degree + r];
                (x + b * c.0, y + b * c.1)
            })
        })
        .collect::<Vec<_>>();
    let mut polyline = polyline;
    polyline[0] = q[0];
    polyline[samples - 1] = q[n];
    Ok(CurveFit {
        polyline,
        degenerate: false,
    })
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn find_span(n: usize, degree: usize, u: f64, knots: &[f64]) -> usize {
    if u >= knots[n + 1] {
        return n;
    }
    let (mut lo, mut hi) = (degree, n + 1);
    let mut mid = (lo + hi) / 2;
    while u < knots[mid] || u >= knots[mid + 1] {
        if u < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
        mid = (lo + hi) / 2;
    }
    mid
}

fn basis_funs(span: usize, u: f64, degree: usize, knots: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
    out
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::InvalidInput("singular spline system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

pub fn polyline_length(polyline: &[(f64, f64)]) -> f64 {
    polyline.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Vector skeleton of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSkeleton {
    pub polyline: Vec<(f64, f64)>,
    pub length: f64,
    pub endpoints: Vec<(f64, f64)>,
}

impl BranchSkeleton {
    pub fn from_polyline(polyline: Vec<(f64, f64)>) -> Self {
        let endpoints = match (polyline.first(), polyline.last()) {
            (Some(&a), Some(&b)) if a != b => vec![a, b],
            (Some(&a), _) => vec![a],
            _ => Vec::new(),
        };
        BranchSkeleton {
            length: polyline_length(&polyline),
            polyline,
            endpoints,
        }
    }
}

/// Normalized coordinate to pixel index.
pub fn to_pixel(p: (f64, f64), size: usize) -> (i64, i64) {
    let s = (size - 1) as f64;
    ((p.0 * s).round() as i64, (p.1 * s).round() as i64)
}

/// Draws the polyline as 8-connected Bresenham segments and stamps a square
/// brush of `stroke` pixels at every visited pixel.
pub fn rasterize(polyline: &[(f64, f64)], size: usize, stroke: usize) -> Result<Mask> {
    if size < 16 {
        return Err(Error::InvalidInput(format!("raster size must be >= 16, got {size}")));
    }
    let mut mask = Mask::new(size, size);
    let stroke = stroke.max(1) as i64;
    let (lo, hi) = (-((stroke - 1) / 2), stroke / 2);
    let mut stamp = |x: i64, y: i64| {
        for dy in lo..=hi {
            for dx in lo..=hi {
                mask.set(x + dx, y + dy, true);
            }
        }
    };
    let pixels: Vec<(i64, i64)> = polyline.iter().map(|&p| to_pixel(p, size)).collect();
    if let [only] = pixels.as_slice() {
        stamp(only.0, only.1);
    }
    for w in pixels.windows(2) {
        for (x, y) in bresenham(w[0], w[1]) {
            stamp(x, y);
        }
    }
    Ok(mask)
}

fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == b {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Zhang-Suen thinning followed by removal of redundant staircase pixels,
/// repeated to a fixed point.
pub fn skeletonize(mask: &Mask) -> Mask {
    let mut m = mask.clone();
    loop {
        let mut changed = false;
        for step in 0..2 {
            let doomed: Vec<(i64, i64)> = m
                .iter_set()
                .filter(|&(x, y)| zhang_suen_removable(&m, x, y, step))
                .collect();
            changed |= !doomed.is_empty();
            for (x, y) in doomed {
                m.set(x, y, false);
            }
        }
        let candidates: Vec<(i64, i64)> = m.iter_set().collect();
        for (x, y) in candidates {
            if m.neighbour_count(x, y) >= 2 && is_simple(&m, x, y) {
                m.set(x, y, false);
                changed = true;
            }
        }
        if !changed {
            return m;
        }
    }
}

fn zhang_suen_removable(m: &Mask, x: i64, y: i64, step: usize) -> bool {
    let r = m.ring(x, y);
    let b = r.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let transitions = (0..8).filter(|&k| !r[k] && r[(k + 1) % 8]).count();
    if transitions != 1 {
        return false;
    }
    let [n, _, e, _, s, _, w, _] = r;
    if step == 0 {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

/// Removing the pixel keeps its foreground neighbours in one 8-connected
/// piece and merges no background regions.
fn is_simple(m: &Mask, x: i64, y: i64) -> bool {
    let r = m.ring(x, y);
    let mut fg_parent: [usize; 8] = std::array::from_fn(|k| k);
    let mut bg_parent: [usize; 8] = std::array::from_fn(|k| k);
    fn find(p: &mut [usize; 8], mut k: usize) -> usize {
        while p[k] != k {
            p[k] = p[p[k]];
            k = p[k];
        }
        k
    }
    for a in 0..8 {
        for b in a + 1..8 {
            let (ax, ay) = RING[a];
            let (bx, by) = RING[b];
            let (ddx, ddy) = ((ax - bx).abs(), (ay - by).abs());
            if r[a] && r[b] && ddx <= 1 && ddy <= 1 {
                let (pa, pb) = (find(&mut fg_parent, a), find(&mut fg_parent, b));
                fg_parent[pa] = pb;
            }
            if !r[a] && !r[b] && ddx + ddy == 1 {
                let (pa, pb) = (find(&mut bg_parent, a), find(&mut bg_parent, b));
                bg_parent[pa] = pb;
            }
        }
    }
    let mut fg_roots: Vec<usize> = (0..8).filter(|&k| r[k]).map(|k| find(&mut fg_parent, k)).collect();
    fg_roots.dedup();
    fg_roots.sort_unstable();
    fg_roots.dedup();
    // Only background pieces touching a 4-neighbour get joined through the
    // removed pixel.
    let mut bg_roots: Vec<usize> = [0, 2, 4, 6]
        .into_iter()
        .filter(|&k| !r[k])
        .map(|k| find(&mut bg_parent, k))
        .collect();
    bg_roots.sort_unstable();
    bg_roots.dedup();
    fg_roots.len() == 1 && bg_roots.len() == 1
}

/// Total edge weight of the 8-connected pixel graph: 1 per axis step, and
/// `sqrt(2)` per diagonal step not already bridged by a shared axis pixel.
pub fn skeleton_length(skeleton: &Mask) -> f64 {
    let mut axis = 0u64;
    let mut diagonal = 0u64;
    for (x, y) in skeleton.iter_set() {
        let g = |dx: i64, dy: i64| skeleton.get(x + dx, y + dy);
        axis += g(1, 0) as u64 + g(0, 1) as u64;
        if g(1, 1) && !g(1, 0) && !g(0, 1) {
            diagonal += 1;
        }
        if g(-1, 1) && !g(-1, 0) && !g(0, 1) {
            diagonal += 1;
        }
    }
    axis as f64 + diagonal as f64 * SQRT_2
}

/// Pixels with at most one 8-neighbour.
pub fn endpoints(skeleton: &Mask) -> Vec<(i64, i64)> {
    skeleton
        .iter_set()
        .filter(|&(x, y)| skeleton.neighbour_count(x, y) <= 1)
        .collect()
}

/// True when the set pixels form a single 8-connected component.
pub fn is_eight_connected(mask: &Mask) -> bool {
    let pixels: Vec<(i64, i64)> = mask.iter_set().collect();
    let Some(&start) = pixels.first() else {
        return true;
    };
    let mut seen = Mask::new(mask.width(), mask.height());
    let mut stack = vec![start];
    seen.set(start.0, start.1, true);
    let mut visited = 0;
    while let Some((x, y)) = stack.pop() {
        visited += 1;
        for (dx, dy) in RING {
            let (nx, ny) = (x + dx, y + dy);
            if mask.get(nx, ny) && !seen.get(nx, ny) {
                seen.set(nx, ny, true);
                stack.push((nx, ny));
            }
        }
    }
    visited == pixels.len()
}

/// Spline, raster and thinning settings shared by reconstruction users.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionParams {
    pub samples: usize,
    pub raster_size: usize,
    pub stroke_px: usize,
}

impl Default for ReconstructionParams {
    fn default() -> Self {
        ReconstructionParams {
            samples: 1024,
            raster_size: 224,
            stroke_px: 2,
        }
    }
}

impl ReconstructionParams {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 || self.raster_size < 16 || self.stroke_px == 0 {
            return Err(Error::InvalidConfig(format!(
                "reconstruction needs samples >= 2, raster_size >= 16, stroke_px >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Raster skeleton of the curve through `points`, or `None` when no
/// points are given.
pub fn reconstruct_skeleton(points: &[(f64, f64)], params: &ReconstructionParams) -> Result<Option<Mask>> {
    if points.is_empty() {
        return Ok(None);
    }
    let curve = fit_branch_curve(points, params.samples)?;
    let mask = rasterize(&curve.polyline, params.raster_size, params.stroke_px)?;
    Ok(Some(skeletonize(&mask)))
}

/// Colour-per-identity polyline overlay in normalized coordinates scaled to
/// `size` pixels.
pub fn svg_overlay(polylines: &[(u32, Vec<(f64, f64)>)], size: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    for (id, line) in polylines {
        let hue = (*id as f64 * 137.508) % 360.0;
        let points: Vec<String> = line
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", x * size as f64, y * size as f64))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline data-identity="{id}" fill="none" stroke="hsl({hue:.1},70%,45%)" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(rows: &[&str]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        Mask::from_pixels(w, h, rows.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect())
    }

    fn line_mask(pixels: &[(i64, i64)], size: usize) -> Mask {
        let mut m = Mask::new(size, size);
        for &(x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }

    #[test]
    fn two_points_give_straight_segment() {
        let c = fit_branch_curve(&[(0.5, 0.8), (0.7, 0.4)], 11).unwrap();
        assert!(!c.degenerate);
        assert_eq!(c.polyline[0], (0.5, 0.8));
        for &(x, y) in &c.polyline {
            // Points on the line y = 0.8 - 2 (x - 0.5).
            assert!((y - (0.8 - 2.0 * (x - 0.5))).abs() < 1e-12);
        }
        assert!((polyline_length(&c.polyline) - (0.2f64.hypot(0.4))).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_stay_collinear() {
        let pts = [(0.1, 0.9), (0.2, 0.75), (0.35, 0.525), (0.5, 0.3)];
        let c = fit_branch_curve(&pts, 200).unwrap();
        for &(x, y) in &c.polyline {
            assert!((y - (0.9 - 1.5 * (x - 0.1))).abs() < 1e-9);
        }
    }

    #[test]
    fn curve_starts_at_branch_point_and_interpolates() {
        let pts = [(0.5, 0.7), (0.55, 0.6), (0.58, 0.5), (0.6, 0.45), (0.66, 0.38)];
        let c = fit_branch_curve(&pts, 513).unwrap();
        assert_eq!(c.polyline[0], pts[0]);
        assert_eq!(*c.polyline.last().unwrap(), pts[4]);
        for p in &pts {
            let nearest = c.polyline.iter().map(|q| dist(*p, *q)).fold(f64::INFINITY, f64::min);
            assert!(nearest < 2e-3);
        }
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let c = fit_branch_curve(&[(0.3, 0.3); 3], 10).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.polyline, vec![(0.3, 0.3)]);
        assert!(fit_branch_curve(&[], 10).is_err());
    }

    #[test]
    fn arc_length_converges_with_density() {
        let pts = [
            (0.5, 0.8),
            (0.56, 0.66),
            (0.6, 0.55),
            (0.66, 0.47),
            (0.7, 0.4),
            (0.71, 0.33),
        ];
        let a = polyline_length(&fit_branch_curve(&pts, 1024).unwrap().polyline);
        let b = polyline_length(&fit_branch_curve(&pts, 2048).unwrap().polyline);
        assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn horizontal_stroke_pixel_count() {
        let size = 224;
        let m = rasterize(&[(0.25, 0.5), (0.75, 0.5)], size, 2).unwrap();
        let (x0, _) = to_pixel((0.25, 0.5), size);
        let (x1, _) = to_pixel((0.75, 0.5), size);
        let span = (x1 - x0 + 1) as usize;
        // Exactly a 2 x (span + 1) block: the brush overhangs one column.
        assert_eq!(m.count(), 2 * (span + 1));
        assert!(m.count().abs_diff(2 * span) <= 4);
    }

    #[test]
    fn empty_polyline_gives_empty_mask() {
        assert!(rasterize(&[], 64, 2).unwrap().is_empty());
        assert!(rasterize(&[(0.5, 0.5)], 8, 2).is_err());
    }

    #[test]
    fn thin_line_is_a_fixed_point() {
        let m = line_mask(&bresenham((3, 20), (40, 9)), 48);
        assert_eq!(skeletonize(&m), m);
    }

    #[test]
    fn thick_bar_thins_to_centerline() {
        let mut m = Mask::new(40, 20);
        for y in 8..13 {
            for x in 5..35 {
                m.set(x, y, true);
            }
        }
        let s = skeletonize(&m);
        assert!(is_eight_connected(&s));
        for x in 0..40 {
            assert!((0..20).filter(|&y| s.get(x, y)).count() <= 1);
        }
        assert!(s.iter_set().all(|(_, y)| (9..=11).contains(&y)));
        assert_eq!(skeletonize(&s), s);
    }

    #[test]
    fn empty_mask_skeleton_is_empty() {
        assert!(skeletonize(&Mask::new(20, 20)).is_empty());
    }

    #[test]
    fn length_reference_values() {
        let run: Vec<(i64, i64)> = (0..10).map(|x| (x + 2, 5)).collect();
        assert_eq!(skeleton_length(&line_mask(&run, 20)), 9.0);
        let diag: Vec<(i64, i64)> = (0..10).map(|k| (k + 1, k + 1)).collect();
        assert_eq!(skeleton_length(&line_mask(&diag, 20)), 9.0 * SQRT_2);
        let l = mask_from(&["#....", "#....", "#....", "#....", "#####"]);
        assert_eq!(l.count(), 9);
        assert_eq!(skeleton_length(&l), 8.0);
    }

    #[test]
    fn endpoint_reference_values() {
        let run: Vec<(i64, i64)> = (0..10).map(|x| (x + 2, 5)).collect();
        let mut ends = endpoints(&line_mask(&run, 20));
        ends.sort();
        assert_eq!(ends, vec![(2, 5), (11, 5)]);
        assert_eq!(endpoints(&line_mask(&[(4, 4)], 20)), vec![(4, 4)]);
        let y = mask_from(&["#.....#", ".#...#.", "..#.#..", "...#...", "...#...", "...#..."]);
        assert_eq!(endpoints(&y).len(), 3);
    }

    #[test]
    fn stroke_round_trip_keeps_length() {
        let size = 224;
        for (a, b) in [
            ((0.25, 0.5), (0.75, 0.5)),
            ((0.4, 0.1), (0.4, 0.9)),
            ((0.2, 0.2), (0.7, 0.7)),
        ] {
            let s = skeletonize(&rasterize(&[a, b], size, 2).unwrap());
            let (pa, pb) = (to_pixel(a, size), to_pixel(b, size));
            let analytic = ((pb.0 - pa.0) as f64).hypot((pb.1 - pa.1) as f64);
            let measured = skeleton_length(&s);
            assert!(
                ((measured - analytic) / analytic).abs() < 0.03,
                "{measured} vs {analytic}"
            );
            assert!(is_eight_connected(&s));
        }
    }

    #[test]
    fn svg_has_one_polyline_per_identity() {
        let svg = svg_overlay(&[(1, vec![(0.1, 0.2), (0.3, 0.4)]), (2, vec![(0.5, 0.5)])], 100);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("10.00,20.00 30.00,40.00"));
    }

    fn rotate(m: &Mask) -> Mask {
        let mut r = Mask::new(m.height(), m.width());
        for (x, y) in m.iter_set() {
            r.set(m.height() as i64 - 1 - y, x, true);
        }
        r
    }

    fn mirror(m: &Mask) -> Mask {
        let mut r = Mask::new(m.width(), m.height());
        for (x, y) in m.iter_set() {
            r.set(m.width() as i64 - 1 - x, y, true);
        }
        r
    }

    proptest! {
        #[test]
        fn skeletonize_is_idempotent(seed in proptest::collection::vec((0.05f64..0.95, 0.05f64..0.95), 2..6), stroke in 1usize..5) {
            let m = rasterize(&seed, 48, stroke).unwrap();
            let s = skeletonize(&m);
            prop_assert_eq!(skeletonize(&s), s.clone());
            prop_assert!(is_eight_connected(&s));
        }

        #[test]
        fn length_invariant_under_rotation_and_mirroring(bits in proptest::collection::vec(any::<bool>(), 144)) {
            let m = Mask::from_pixels(12, 12, bits);
            let l = skeleton_length(&m);
            prop_assert!((skeleton_length(&rotate(&m)) - l).abs() < 1e-9);
            prop_assert!((skeleton_length(&mirror(&m)) - l).abs() < 1e-9);
        }
    }
}
