//! Procedural plant-growth sequences with ground-truth identities.
//!
//! Each plant is a vertical stem carrying lateral branches attached
//! bottom-up. A branch emerges on a random day and its floral bud sits at
//! the tip. The tip climbs at a rate shared by the whole plant while its
//! horizontal offset sweeps outward along a logistic growth curve. The
//! entanglement level lengthens the sweep, so late-stage tips swing back
//! across the stem and cross their neighbours, which is what makes geometry
//! alone ambiguous late in a sequence. Observations add horizontal sway,
//! position noise and random occlusion.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{encode_rle, Sequence, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::reconstruction::rasterize;
use crate::types::{BranchPoint, Bud, Frame, TrackSet};

/// Horizontal sample points per rendered branch polyline.
const POLYLINE_SAMPLES: usize = 48;
/// Resampling budget when a plant violates the separation floor.
const MAX_PLANT_ATTEMPTS: usize = 64;
/// Minimum final tip separation at zero entanglement, normalized units.
pub const SEPARATION_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_plants: usize,
    pub frames: usize,
    pub dt_days: f64,
    /// Relative jitter of each frame interval, in `[0, 1)`.
    pub dt_jitter: f64,
    pub entanglement: f64,
    /// Independent per-bud, per-frame dropout probability.
    pub occlusion: f64,
    /// Extra dropout probability for a bud that overlaps another bud.
    pub correlated_occlusion: f64,
    pub emergence_start_day: f64,
    pub emergence_end_day: f64,
    pub min_branches: usize,
    pub max_branches: usize,
    /// Peak horizontal sway of a bud, normalized units.
    pub sway_amplitude: f64,
    pub sway_period_days: f64,
    /// Standard deviation of Gaussian jitter on observed bud centers.
    pub position_noise: f64,
    /// Camera azimuths in degrees; one sequence per plant and view.
    pub views: Vec<f64>,
    pub render_masks: bool,
    pub raster_size: usize,
    pub stroke_px: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 7,
            n_plants: 50,
            frames: 20,
            dt_days: 1.0,
            dt_jitter: 0.0,
            entanglement: 1.0,
            occlusion: 0.15,
            correlated_occlusion: 0.0,
            emergence_start_day: 0.0,
            emergence_end_day: 6.0,
            min_branches: 6,
            max_branches: 7,
            sway_amplitude: 0.02,
            sway_period_days: 10.0,
            position_noise: 0.002,
            views: vec![0.0],
            render_masks: false,
            raster_size: 224,
            stroke_px: 2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, p) in [
            ("entanglement", self.entanglement),
            ("occlusion", self.occlusion),
            ("correlated_occlusion", self.correlated_occlusion),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.n_plants == 0 || self.frames == 0 {
            return bad("n_plants and frames must be positive".into());
        }
        if self.min_branches == 0 || self.max_branches < self.min_branches {
            return bad(format!(
                "branch count range {}..={} is empty or allows zero branches",
                self.min_branches, self.max_branches
            ));
        }
        if !(self.dt_days > 0.0) || !(0.0..1.0).contains(&self.dt_jitter) {
            return bad("dt_days must be positive and dt_jitter in [0, 1)".into());
        }
        if !(self.emergence_start_day >= 0.0 && self.emergence_end_day >= self.emergence_start_day) {
            return bad("emergence window must be a non-negative interval".into());
        }
        if self.sway_amplitude < 0.0 || self.position_noise < 0.0 || !(self.sway_period_days > 0.0) {
            return bad("sway and noise must be non-negative with a positive period".into());
        }
        if self.views.is_empty() {
            return bad("at least one view is required".into());
        }
        if self.raster_size < 16 || self.stroke_px == 0 {
            return bad("raster_size must be >= 16 and stroke_px >= 1".into());
        }
        Ok(())
    }

    /// Seed of plant `index`, derived from the global seed.
    pub fn plant_seed(&self, index: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng.next_u64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchModel {
    pub order: u32,
    pub emergence_day: f64,
    pub attach_y: f64,
    /// Azimuth of the branch around the stem, radians.
    pub azimuth: f64,
    /// Peak horizontal reach.
    pub reach: f64,
    /// Half-turns of the horizontal sweep over full growth. Above 1 the tip
    /// swings back past the stem toward the other side.
    pub sweep: f64,
    /// Vertical climb of the tip, normalized units per day.
    pub climb_rate: f64,
    /// Logistic steepness, per day.
    pub elongation_rate: f64,
    /// Days from emergence to half length.
    pub half_length_day: f64,
    pub sway_phase: f64,
    pub sway_scale: f64,
    pub bud_size: f64,
    pub bud_growth: f64,
    pub bud_aspect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub seed: u64,
    pub stem_x: f64,
    pub branches: Vec<BranchModel>,
}

impl BranchModel {
    /// Growth fraction in `[0, 1]`: zero at emergence, one asymptotically.
    pub fn growth(&self, day: f64) -> f64 {
        let tau = day - self.emergence_day;
        if tau <= 0.0 {
            return 0.0;
        }
        let s = |t: f64| 1.0 / (1.0 + (-self.elongation_rate * (t - self.half_length_day)).exp());
        let s0 = s(0.0);
        (s(tau) - s0) / (1.0 - s0)
    }

    /// Signed horizontal projection of the branch for a camera azimuth.
    pub fn lateral(&self, view_deg: f64) -> f64 {
        (self.azimuth - view_deg.to_radians()).cos()
    }

    /// Noise-free tip position on `day`. Height falls linearly with age
    /// while the horizontal offset follows the growth curve.
    pub fn tip(&self, stem_x: f64, view_deg: f64, day: f64) -> (f64, f64) {
        let age = (day - self.emergence_day).max(0.0);
        let l = self.growth(day);
        let x = stem_x + self.lateral(view_deg) * self.reach * (PI * self.sweep * l).sin();
        let y = self.attach_y - self.climb_rate * age;
        (x.clamp(0.01, 0.99), y.clamp(0.01, 0.99))
    }

    /// Orientation of the branch base: direction from the attachment point
    /// to the tip at half length.
    pub fn theta(&self, stem_x: f64, view_deg: f64) -> f64 {
        let half = self.emergence_day + self.half_length_day;
        let (x, y) = self.tip(stem_x, view_deg, half);
        let t = (y - self.attach_y).atan2(x - stem_x);
        if t <= -PI {
            t + 2.0 * PI
        } else {
            t
        }
    }

    pub fn bud_box(&self, l: f64) -> (f64, f64) {
        let w = self.bud_size * (1.0 + self.bud_growth * l);
        (w, w * self.bud_aspect)
    }

    /// Branch centerline on `day`: the path traced by the tip since
    /// emergence, starting at the attachment point.
    pub fn polyline(&self, stem_x: f64, view_deg: f64, day: f64) -> Vec<(f64, f64)> {
        let age = (day - self.emergence_day).max(0.0);
        let mut out = vec![(stem_x, self.attach_y)];
        out.extend((1..POLYLINE_SAMPLES).map(|k| {
            let d = self.emergence_day + age * k as f64 / (POLYLINE_SAMPLES - 1) as f64;
            self.tip(stem_x, view_deg, d)
        }));
        out
    }
}

/// Day of every frame, starting at day 0.
pub fn frame_days(config: &SimConfig, rng: &mut impl Rng) -> Vec<f64> {
    let mut day = 0.0;
    (0..config.frames)
        .map(|k| {
            if k > 0 {
                let j = if config.dt_jitter > 0.0 {
                    rng.gen_range(-config.dt_jitter..config.dt_jitter)
                } else {
                    0.0
                };
                day += config.dt_days * (1.0 + j);
            }
            day
        })
        .collect()
}

fn last_day(config: &SimConfig) -> f64 {
    config.dt_days * (config.frames.saturating_sub(1)) as f64
}

/// Deterministic plant model for `(config, plant_seed)`. Rejects and
/// resamples plants whose noise-free final tips come closer than
/// `SEPARATION_FLOOR * (1 - entanglement)` in any view.
pub fn generate_plant(config: &SimConfig, plant_seed: u64) -> Result<PlantModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plant_seed);
    let floor = SEPARATION_FLOOR * (1.0 - config.entanglement);
    let mut plant = sample_plant(config, plant_seed, &mut rng);
    for _ in 1..MAX_PLANT_ATTEMPTS {
        if min_final_separation(&plant, config) >= floor {
            return Ok(plant);
        }
        plant = sample_plant(config, plant_seed, &mut rng);
    }
    if min_final_separation(&plant, config) >= floor {
        Ok(plant)
    } else {
        Err(Error::InvalidConfig(format!(
            "could not place branches {floor:.3} apart; lower the branch count or raise entanglement"
        )))
    }
}

fn sample_plant(config: &SimConfig, seed: u64, rng: &mut ChaCha8Rng) -> PlantModel {
    let e = config.entanglement;
    let n = rng.gen_range(config.min_branches..=config.max_branches);
    let stem_x = 0.5 + rng.gen_range(-0.03..0.03);
    let bottom = rng.gen_range(0.84..0.88);
    let spacing = rng.gen_range(0.36..0.42) / n as f64;
    let horizon = last_day(config);
    let golden = PI * (3.0 - 5f64.sqrt());
    // One climb rate per plant keeps upward motion coordinated across buds.
    let climb = rng.gen_range(0.36..0.46) / horizon.max(config.dt_days);
    let mut branches = Vec::with_capacity(n);
    for k in 0..n {
        let order = k as u32 + 1;
        let attach_y = bottom - spacing * k as f64;
        // Alternate sides, with phyllotactic wobble in depth.
        let side = if k % 2 == 0 { 0.0 } else { PI };
        let azimuth = side + (golden * k as f64).sin() * rng.gen_range(0.2..0.6);
        let emergence_day = if config.emergence_end_day > config.emergence_start_day {
            rng.gen_range(config.emergence_start_day..config.emergence_end_day)
        } else {
            config.emergence_start_day
        };
        let reach = rng.gen_range(0.18..0.26);
        // Entangled branches swing back across the stem late in growth.
        let sweep = 0.5 + e * rng.gen_range(0.6..0.9);
        let remaining = (horizon - emergence_day).max(config.dt_days);
        branches.push(BranchModel {
            order,
            emergence_day,
            attach_y,
            azimuth,
            reach,
            sweep,
            climb_rate: climb * rng.gen_range(0.95..1.05),
            elongation_rate: rng.gen_range(0.35..0.6),
            half_length_day: remaining * rng.gen_range(0.35..0.5),
            sway_phase: rng.gen_range(0.0..2.0 * PI),
            sway_scale: rng.gen_range(0.6..1.0),
            bud_size: rng.gen_range(0.014..0.022),
            bud_growth: rng.gen_range(0.3..0.8),
            bud_aspect: rng.gen_range(0.8..1.4),
        });
    }
    PlantModel { seed, stem_x, branches }
}

/// Smallest pairwise distance between noise-free tips at the last frame,
/// over every configured view.
pub fn min_final_separation(plant: &PlantModel, config: &SimConfig) -> f64 {
    let day = last_day(config);
    let mut best = f64::INFINITY;
    for &view in &config.views {
        let tips: Vec<(f64, f64)> = plant.branches.iter().map(|b| b.tip(plant.stem_x, view, day)).collect();
        for a in 0..tips.len() {
            for b in a + 1..tips.len() {
                best = best.min((tips[a].0 - tips[b].0).hypot(tips[a].1 - tips[b].1));
            }
        }
    }
    best
}

/// One rendered plant/view sequence with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSequence {
    pub sequence: Sequence,
    pub gt_tracks: TrackSet,
    /// Final noise-free centerline of every branch, keyed by order.
    pub polylines: Vec<(u32, Vec<(f64, f64)>)>,
}

pub fn render_sequence(
    plant: &PlantModel,
    plant_index: usize,
    view_index: usize,
    config: &SimConfig,
) -> Result<SimulatedSequence> {
    let view = *config
        .views
        .get(view_index)
        .ok_or_else(|| Error::InvalidInput(format!("no view with index {view_index}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(plant.seed ^ 0x5DEE_CE66_D1CE_4E5B);
    rng.set_stream(view_index as u64 + 1);
    let days = frame_days(config, &mut rng);
    let noise = rand_distr::Normal::new(0.0, config.position_noise.max(0.0))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut frames = Vec::with_capacity(days.len());
    for (index, &day) in days.iter().enumerate() {
        let mut branch_points = Vec::new();
        let mut buds = Vec::new();
        let mut masks = config.render_masks.then(Vec::new);
        for b in &plant.branches {
            if day < b.emergence_day {
                continue;
            }
            let first_seen = days.iter().position(|&d| d >= b.emergence_day).unwrap_or(index);
            branch_points.push(BranchPoint {
                id: b.order - 1,
                order: b.order,
                x: plant.stem_x,
                y: b.attach_y,
                theta: b.theta(plant.stem_x, view),
                first_seen,
                reserved: 0.0,
            });
            let l = b.growth(day);
            if let Some(masks) = masks.as_mut() {
                let mask = rasterize(
                    &b.polyline(plant.stem_x, view, day),
                    config.raster_size,
                    config.stroke_px,
                )?;
                masks.push(encode_rle(b.order - 1, &mask));
            }
            let (tx, ty) = b.tip(plant.stem_x, view, day);
            let sway = config.sway_amplitude
                * b.sway_scale
                * l
                * (2.0 * PI * day / config.sway_period_days + b.sway_phase).sin();
            let mut jitter = || {
                if config.position_noise > 0.0 {
                    rng.sample(noise)
                } else {
                    0.0
                }
            };
            let (jx, jy) = (jitter(), jitter());
            let (w, h) = b.bud_box(l);
            buds.push(Bud {
                id: 0,
                gt_order: b.order,
                cx: (tx + sway + jx).clamp(0.0, 1.0),
                cy: (ty + jy).clamp(0.0, 1.0),
                w,
                h,
                frame: index,
            });
        }
        occlude(&mut buds, config, &mut rng);
        buds.shuffle(&mut rng);
        for (k, bud) in buds.iter_mut().enumerate() {
            bud.id = k as u32;
        }
        frames.push(Frame {
            index,
            timestamp_days: day,
            branch_points,
            buds,
            masks,
            reset_history: false,
        });
    }

    let final_day = *days.last().unwrap_or(&0.0);
    let sequence = Sequence {
        schema_version: SCHEMA_VERSION,
        plant_id: format!("plant-{plant_index:03}"),
        view_angle_deg: view,
        frames,
    };
    let gt_tracks = sequence.ground_truth_tracks();
    let polylines = plant
        .branches
        .iter()
        .filter(|b| b.emergence_day <= final_day)
        .map(|b| (b.order, b.polyline(plant.stem_x, view, final_day)))
        .collect();
    Ok(SimulatedSequence {
        sequence,
        gt_tracks,
        polylines,
    })
}

fn occlude(buds: &mut Vec<Bud>, config: &SimConfig, rng: &mut ChaCha8Rng) {
    if config.occlusion == 0.0 && config.correlated_occlusion == 0.0 {
        return;
    }
    let crowded: Vec<bool> = buds
        .iter()
        .enumerate()
        .map(|(i, a)| {
            buds.iter().enumerate().any(|(j, b)| {
                i != j && (a.cx - b.cx).abs() < 0.5 * (a.w + b.w) && (a.cy - b.cy).abs() < 0.5 * (a.h + b.h)
            })
        })
        .collect();
    let keep: Vec<bool> = crowded
        .iter()
        .map(|&c| {
            let p = config.occlusion + if c { config.correlated_occlusion } else { 0.0 };
            !rng.gen_bool(p.min(1.0))
        })
        .collect();
    let mut k = keep.into_iter();
    buds.retain(|_| k.next().unwrap_or(true));
}

/// Every plant and view of a configuration, in plant-major order.
pub fn generate_dataset(config: &SimConfig, exec: Execution) -> Result<Vec<SimulatedSequence>> {
    config.validate()?;
    let per_plant = exec.map_range(config.n_plants, |p| -> Result<Vec<SimulatedSequence>> {
        let plant = generate_plant(config, config.plant_seed(p))?;
        (0..config.views.len())
            .map(|v| render_sequence(&plant, p, v, config))
            .collect()
    });
    let mut out = Vec::new();
    for seqs in per_plant {
        out.extend(seqs?);
    }
    Ok(out)
}

/// Controlled corruptions used by stress tests and ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Exchanges the positions of the buds with orders (1, 2), (3, 4), ...
    SwapAdjacentBuds,
    /// Marks every frame as having no usable predecessor.
    DropHistory,
    /// Pins each bud to the position where it was first observed.
    FreezeGrowth,
}

impl std::str::FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swap-adjacent-buds" => Ok(Perturbation::SwapAdjacentBuds),
            "drop-history" => Ok(Perturbation::DropHistory),
            "freeze-growth" => Ok(Perturbation::FreezeGrowth),
            other => Err(Error::UnknownMode(format!(
                "perturbation `{other}` (expected swap-adjacent-buds, drop-history or freeze-growth)"
            ))),
        }
    }
}

pub fn perturb_for_ablation(frames: &[Frame], mode: Perturbation) -> Vec<Frame> {
    let mut out = frames.to_vec();
    match mode {
        Perturbation::SwapAdjacentBuds => {
            for frame in &mut out {
                let originals = frame.buds.clone();
                for bud in &mut frame.buds {
                    let partner = if bud.gt_order % 2 == 1 {
                        bud.gt_order + 1
                    } else {
                        bud.gt_order - 1
                    };
                    if let Some(p) = originals.iter().find(|b| b.gt_order == partner) {
                        bud.cx = p.cx;
                        bud.cy = p.cy;
                    }
                }
            }
        }
        Perturbation::DropHistory => {
            for frame in &mut out {
                frame.reset_history = true;
            }
        }
        Perturbation::FreezeGrowth => {
            let mut first = std::collections::BTreeMap::new();
            for frame in &mut out {
                for bud in &mut frame.buds {
                    let (x, y) = *first.entry(bud.gt_order).or_insert((bud.cx, bud.cy));
                    bud.cx = x;
                    bud.cy = y;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::validate_sequence;
    use crate::reconstruction::is_eight_connected;

    fn quiet(e: f64) -> SimConfig {
        SimConfig {
            n_plants: 4,
            entanglement: e,
            occlusion: 0.0,
            sway_amplitude: 0.0,
            position_noise: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_plant() {
        let c = SimConfig::default();
        assert_eq!(generate_plant(&c, 42).unwrap(), generate_plant(&c, 42).unwrap());
        assert_ne!(generate_plant(&c, 42).unwrap(), generate_plant(&c, 43).unwrap());
    }

    #[test]
    fn zero_branches_is_an_error() {
        let c = SimConfig {
            min_branches: 0,
            max_branches: 0,
            ..Default::default()
        };
        assert!(generate_plant(&c, 1).is_err());
        assert!(SimConfig {
            entanglement: 2.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn separation_floor_and_ambiguity_by_entanglement() {
        let ambiguity = crate::spatial::SpatialParams::default().sigma_d * crate::types::DIAGONAL;
        for seed in 0..30 {
            let c = quiet(0.0);
            let p = generate_plant(&c, seed).unwrap();
            assert!(min_final_separation(&p, &c) >= SEPARATION_FLOOR);
            let c = quiet(1.0);
            let p = generate_plant(&c, seed).unwrap();
            assert!(min_final_separation(&p, &c) < ambiguity);
        }
    }

    #[test]
    fn ordering_of_attachment_heights() {
        let p = generate_plant(&SimConfig::default(), 5).unwrap();
        for w in p.branches.windows(2) {
            assert!(w[0].order < w[1].order && w[0].attach_y > w[1].attach_y);
            assert!(w[0].elongation_rate > 0.0);
        }
    }

    #[test]
    fn noise_free_tracks_rise_every_frame() {
        let c = quiet(0.5);
        for s in generate_dataset(&c, Execution::Sequential).unwrap() {
            let frames = &s.sequence.frames;
            assert!(validate_sequence(frames).is_empty());
            for (order, track) in &s.gt_tracks.tracks {
                let first = track[0].0;
                assert_eq!(track.len(), frames.len() - first, "order {order} has gaps");
                let ys: Vec<f64> = track
                    .iter()
                    .map(|&(f, id)| frames[f].bud_by_id(id).unwrap().cy)
                    .collect();
                assert!(ys.windows(2).all(|w| w[1] < w[0]), "order {order}: {ys:?}");
            }
        }
    }

    #[test]
    fn occlusion_rate_matches_probability() {
        let mut seen = 0usize;
        let mut possible = 0usize;
        for seed in 0..100 {
            let c = SimConfig {
                seed,
                n_plants: 1,
                occlusion: 0.2,
                ..Default::default()
            };
            let plant = generate_plant(&c, c.plant_seed(0)).unwrap();
            let s = render_sequence(&plant, 0, 0, &c).unwrap();
            for f in &s.sequence.frames {
                seen += f.buds.len();
                possible += f.branch_points.len();
            }
        }
        let coverage = seen as f64 / possible as f64;
        assert!((coverage - 0.8).abs() < 0.03, "{coverage}");
    }

    #[test]
    fn masks_are_connected_strokes() {
        let c = SimConfig {
            n_plants: 1,
            frames: 6,
            render_masks: true,
            ..Default::default()
        };
        let s = &generate_dataset(&c, Execution::Sequential).unwrap()[0];
        for f in &s.sequence.frames {
            for rle in f.masks.as_ref().unwrap() {
                assert!(is_eight_connected(&crate::dataset::decode_rle(rle).unwrap()));
            }
        }
    }

    #[test]
    fn buds_lie_on_their_branch_polyline() {
        let c = quiet(0.8);
        let s = &generate_dataset(&c, Execution::Sequential).unwrap()[0];
        let last = s.sequence.frames.last().unwrap();
        let px = 1.0 / (c.raster_size - 1) as f64;
        for bud in &last.buds {
            let (_, line) = s.polylines.iter().find(|(o, _)| *o == bud.gt_order).unwrap();
            let end = line.last().unwrap();
            assert!((end.0 - bud.cx).hypot(end.1 - bud.cy) <= px);
        }
    }

    #[test]
    fn dataset_is_deterministic_across_execution_modes() {
        let c = SimConfig {
            n_plants: 6,
            ..Default::default()
        };
        let a = generate_dataset(&c, Execution::Sequential).unwrap();
        let b = crate::par::with_threads(4, || generate_dataset(&c, Execution::Parallel).unwrap());
        assert_eq!(a, b);
        assert!(a.iter().all(|s| validate_sequence(&s.sequence.frames).is_empty()));
    }

    #[test]
    fn perturbations() {
        let c = SimConfig {
            n_plants: 1,
            ..quiet(0.8)
        };
        let frames = generate_dataset(&c, Execution::Sequential).unwrap()[0]
            .sequence
            .frames
            .clone();
        let dropped = perturb_for_ablation(&frames, Perturbation::DropHistory);
        assert!(dropped.iter().all(|f| f.reset_history));
        let frozen = perturb_for_ablation(&frames, Perturbation::FreezeGrowth);
        let n = frozen.len();
        let dy = crate::temporal::estimate_global_uplift(&frozen[n - 1].buds, &frozen[n - 2].buds, 3);
        assert_eq!(dy, 0.0);
        let swapped = perturb_for_ablation(&frames, Perturbation::SwapAdjacentBuds);
        assert_ne!(swapped, frames);
        assert!("shuffle".parse::<Perturbation>().is_err());
    }
}
