//! Seeded synthetic dyad scenarios with analytic ground truth.
//!
//! Cows are rigid top-down 27-point templates aligned with the x axis. In a
//! dyad, cow A sits still and cow B is placed beside it so that the closest
//! keypoint pair is always A's reference point (nose when the head is
//! turned toward B, otherwise the near shoulder) and one of B's near-side
//! extremes, separated purely along y. The noise-free min-pair distance,
//! divided by the mean box diagonal, is then exactly the template curve
//! g(t).

use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{BBox, Detection, FrameRecord, Keypoint, Label, Skeleton, StreamMeta, HEAD_SEGMENT, KEYPOINT_COUNT};
use crate::error::{Error, Result};
use crate::evalkit::mot::GroundTruthFrame;
use crate::par;
use crate::svm::GroupKey;
use crate::tracker::{Observation, Track};

/// Body-frame keypoints of a cow facing +x, centered at the origin. The
/// left side is −y.
pub const BODY_TEMPLATE: [(f64, f64); KEYPOINT_COUNT] = [
    (100.0, 0.0),   // nose
    (85.0, -10.0),  // left_eye
    (85.0, 10.0),   // right_eye
    (75.0, -18.0),  // left_ear
    (75.0, 18.0),   // right_ear
    (72.0, 0.0),    // poll
    (82.0, 4.0),    // throat
    (50.0, 0.0),    // withers
    (0.0, 0.0),     // mid_back
    (-55.0, 0.0),   // hip
    (-85.0, 0.0),   // tail_base
    (-93.0, 0.0),   // tail_mid
    (-100.0, 0.0),  // tail_tip
    (45.0, -35.0),  // left_shoulder
    (40.0, -28.0),  // left_elbow
    (38.0, -24.0),  // left_front_knee
    (36.0, -20.0),  // left_front_hoof
    (45.0, 35.0),   // right_shoulder
    (40.0, 28.0),   // right_elbow
    (38.0, 24.0),   // right_front_knee
    (36.0, 20.0),   // right_front_hoof
    (-50.0, -35.0), // left_hip
    (-56.0, -28.0), // left_hock
    (-58.0, -22.0), // left_rear_hoof
    (-50.0, 35.0),  // right_hip
    (-56.0, 28.0),  // right_hock
    (-58.0, 22.0),  // right_rear_hoof
];

const WITHERS: usize = 7;
const LEFT_SHOULDER: usize = 13;
const RIGHT_SHOULDER: usize = 17;
const LEFT_HIP: usize = 21;
const RIGHT_HIP: usize = 24;
pub const BOX_MARGIN: f64 = 8.0;
pub const KEYPOINT_CONFIDENCE: f64 = 0.9;
pub const DETECTION_CONFIDENCE: f64 = 0.9;

/// World keypoints of a cow at `center`, facing `facing` (±1 along x), with
/// the head segment rotated about the withers by `turn`·90° toward world
/// side sign(`turn`); `turn` lies in [-1, 1] and ±1 is a full lateral turn.
pub fn body_points(center: (f64, f64), facing: f64, turn: f64) -> [(f64, f64); KEYPOINT_COUNT] {
    let mut local = BODY_TEMPLATE;
    if turn != 0.0 {
        let (wx, wy) = BODY_TEMPLATE[WITHERS];
        // turn is expressed in world y; map into the body frame
        let s = turn * facing;
        let (sin, cos) = if s.abs() == 1.0 { (s, 0.0) } else { (s * FRAC_PI_2).sin_cos() };
        for &i in &HEAD_SEGMENT {
            let (dx, dy) = (BODY_TEMPLATE[i].0 - wx, BODY_TEMPLATE[i].1 - wy);
            local[i] = (wx + cos * dx - sin * dy, wy + sin * dx + cos * dy);
        }
    }
    let mut out = [(0.0, 0.0); KEYPOINT_COUNT];
    for (o, (x, y)) in out.iter_mut().zip(local) {
        *o = (center.0 + facing * x, center.1 + facing * y);
    }
    out
}

pub fn points_box(points: &[(f64, f64)]) -> BBox {
    let (mut x1, mut y1, mut x2, mut y2) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x1 = x1.min(x);
        y1 = y1.min(y);
        x2 = x2.max(x);
        y2 = y2.max(y);
    }
    BBox {
        x1: x1 - BOX_MARGIN,
        y1: y1 - BOX_MARGIN,
        x2: x2 + BOX_MARGIN,
        y2: y2 + BOX_MARGIN,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Grooming,
    Headbutt,
    Displacement,
    PassiveProximity,
    NoContact,
}

impl Template {
    pub const INTERACTIONS: [Template; 3] = [Template::Grooming, Template::Headbutt, Template::Displacement];

    pub fn label(self) -> Label {
        match self {
            Template::Grooming => Label::LickGroom,
            Template::Headbutt => Label::Headbutt,
            Template::Displacement => Label::Displacement,
            Template::PassiveProximity | Template::NoContact => Label::NoInteraction,
        }
    }

    /// Whether cow A turns its head toward B.
    pub fn engaged(self) -> bool {
        Template::INTERACTIONS.contains(&self)
    }
}

/// Normalized distance curve g(t) with closed-form derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kinematics {
    Constant { g: f64 },
    /// g0 + amp·sin(2πft + phase)
    Sine { g0: f64, amp: f64, freq: f64, phase: f64 },
    /// g0 + amp·(1 − cos 2πft)/2
    Bump { g0: f64, amp: f64, freq: f64 },
    /// g0 + speed·τ·[softplus((t − t_start)/τ) − softplus(−t_start/τ)]
    Ramp { g0: f64, speed: f64, t_start: f64, tau: f64 },
    /// Ramp plus a zero-based bump of `amp`, `freq`.
    Shove { g0: f64, speed: f64, t_start: f64, tau: f64, amp: f64, freq: f64 },
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Kinematics {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Kinematics::Constant { g } => g,
            Kinematics::Sine { g0, amp, freq, phase } => g0 + amp * (2.0 * PI * freq * t + phase).sin(),
            Kinematics::Bump { g0, amp, freq } => g0 + amp * (1.0 - (2.0 * PI * freq * t).cos()) / 2.0,
            Kinematics::Ramp { g0, speed, t_start, tau } => {
                g0 + speed * tau * (softplus((t - t_start) / tau) - softplus(-t_start / tau))
            }
            Kinematics::Shove { .. } => {
                let (ramp, bump) = self.split();
                ramp.value(t) + bump.value(t)
            }
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        match *self {
            Kinematics::Constant { .. } => 0.0,
            Kinematics::Sine { amp, freq, phase, .. } => {
                amp * 2.0 * PI * freq * (2.0 * PI * freq * t + phase).cos()
            }
            Kinematics::Bump { amp, freq, .. } => amp * PI * freq * (2.0 * PI * freq * t).sin(),
            Kinematics::Ramp { speed, t_start, tau, .. } => speed * sigmoid((t - t_start) / tau),
            Kinematics::Shove { .. } => {
                let (ramp, bump) = self.split();
                ramp.d1(t) + bump.d1(t)
            }
        }
    }

    pub fn d2(&self, t: f64) -> f64 {
        match *self {
            Kinematics::Constant { .. } => 0.0,
            Kinematics::Sine { amp, freq, phase, .. } => {
                let w = 2.0 * PI * freq;
                -amp * w * w * (w * t + phase).sin()
            }
            Kinematics::Bump { amp, freq, .. } => {
                let w = 2.0 * PI * freq;
                amp / 2.0 * w * w * (w * t).cos()
            }
            Kinematics::Ramp { speed, t_start, tau, .. } => {
                let s = sigmoid((t - t_start) / tau);
                speed / tau * s * (1.0 - s)
            }
            Kinematics::Shove { .. } => {
                let (ramp, bump) = self.split();
                ramp.d2(t) + bump.d2(t)
            }
        }
    }

    fn split(&self) -> (Kinematics, Kinematics) {
        match *self {
            Kinematics::Shove { g0, speed, t_start, tau, amp, freq } => (
                Kinematics::Ramp { g0, speed, t_start, tau },
                Kinematics::Bump { g0: 0.0, amp, freq },
            ),
            k => (k, Kinematics::Constant { g: 0.0 }),
        }
    }

    /// Number of sign changes of g″ in the open interval (t0, t1).
    pub fn d2_sign_changes(&self, t0: f64, t1: f64) -> usize {
        let count = |offset: f64, period: f64| -> usize {
            // zeros at t = offset + m·period
            let lo = ((t0 - offset) / period).floor() as i64 - 1;
            let hi = ((t1 - offset) / period).ceil() as i64 + 1;
            (lo..=hi)
                .map(|m| offset + m as f64 * period)
                .filter(|&t| t > t0 && t < t1)
                .count()
        };
        match *self {
            Kinematics::Constant { .. } | Kinematics::Ramp { .. } => 0,
            Kinematics::Sine { freq, phase, .. } => count(-phase / (2.0 * PI * freq), 1.0 / (2.0 * freq)),
            Kinematics::Bump { freq, .. } => count(1.0 / (4.0 * freq), 1.0 / (2.0 * freq)),
            Kinematics::Shove { .. } => self.scan_sign_changes(t0, t1),
        }
    }

    /// Sign changes of g″ found by a dense scan with bisection refinement;
    /// used where no closed form exists.
    fn scan_sign_changes(&self, t0: f64, t1: f64) -> usize {
        const STEP: f64 = 1e-3;
        let n = ((t1 - t0) / STEP).ceil() as usize;
        let mut count = 0;
        let mut prev = self.d2(t0 + STEP * 0.5);
        for i in 1..n {
            let t = (t0 + STEP * (i as f64 + 0.5)).min(t1);
            let cur = self.d2(t);
            if prev * cur < 0.0 {
                count += 1;
            }
            if cur != 0.0 {
                prev = cur;
            }
        }
        count
    }
}

/// Which of B's near-side extremes meets A's reference point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contact {
    /// B faces the same way as A; contact at B's near shoulder.
    Shoulder,
    /// B faces the opposite way; contact at B's near hip.
    Hip,
}

/// Dyad layout with B on A's `side` (±1 in world y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub side: i8,
    pub contact: Contact,
    pub engaged: bool,
}

impl Layout {
    pub fn b_facing(&self) -> f64 {
        match self.contact {
            Contact::Shoulder => 1.0,
            Contact::Hip => -1.0,
        }
    }

    pub fn a_turn(&self) -> i8 {
        if self.engaged {
            self.side
        } else {
            0
        }
    }

    /// Keypoint indices (A reference, B contact).
    pub fn contact_pair(&self) -> (usize, usize) {
        let a = if self.engaged {
            0
        } else if self.side > 0 {
            RIGHT_SHOULDER
        } else {
            LEFT_SHOULDER
        };
        // B's near side is −side in world y; in B's body frame that flips
        // with its facing
        let b_local_side = -(self.side as f64) * self.b_facing();
        let b = match (self.contact, b_local_side > 0.0) {
            (Contact::Shoulder, true) => RIGHT_SHOULDER,
            (Contact::Shoulder, false) => LEFT_SHOULDER,
            (Contact::Hip, true) => RIGHT_HIP,
            (Contact::Hip, false) => LEFT_HIP,
        };
        (a, b)
    }

    pub fn a_points(&self, a_center: (f64, f64)) -> [(f64, f64); KEYPOINT_COUNT] {
        body_points(a_center, 1.0, self.a_turn() as f64)
    }

    /// Mean box diagonal of the pair; independent of placement.
    pub fn normalizer(&self) -> f64 {
        let a = points_box(&body_points((0.0, 0.0), 1.0, self.a_turn() as f64));
        let b = points_box(&body_points((0.0, 0.0), self.b_facing(), 0.0));
        (a.diagonal() + b.diagonal()) / 2.0
    }

    /// B's center such that the contact pair is `g · normalizer` apart.
    pub fn b_center(&self, a_center: (f64, f64), g: f64) -> (f64, f64) {
        let (ia, ib) = self.contact_pair();
        let reference = self.a_points(a_center)[ia];
        let origin_b = body_points((0.0, 0.0), self.b_facing(), 0.0)[ib];
        let target = (reference.0, reference.1 + self.side as f64 * g * self.normalizer());
        (target.0 - origin_b.0, target.1 - origin_b.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub template: Template,
    pub duration_s: f64,
    pub fps: f64,
    /// Keypoint noise standard deviation in normalized distance units.
    pub noise_sigma: f64,
    /// Fraction of keypoint samples dropped.
    pub occlusion_rate: f64,
    pub seed: u64,
    pub identities: (String, String),
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("synth fps must be > 0, got {}", self.fps)));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("synth duration must be > 0".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(0.0..=1.0).contains(&self.occlusion_rate) {
            return Err(Error::Config("synth noise must be >= 0 and occlusion in [0, 1]".into()));
        }
        if self.identities.0 == self.identities.1 {
            return Err(Error::Config("synth identities must differ".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClip {
    pub spec: ScenarioSpec,
    pub label: Label,
    pub kinematics: Kinematics,
    pub layout: Layout,
    pub normalizer: f64,
    pub meta: StreamMeta,
    pub frames: Vec<FrameRecord>,
    /// g(t) at every frame.
    pub analytic: Vec<f64>,
}

pub const IMAGE_SIZE: (u32, u32) = (3840, 2160);

/// Draws template parameters for a clip of `duration` seconds.
pub fn sample_kinematics(template: Template, duration: f64, rng: &mut impl Rng) -> Kinematics {
    match template {
        Template::Grooming => Kinematics::Sine {
            g0: rng.gen_range(0.02..0.12),
            amp: rng.gen_range(0.004..0.012),
            freq: rng.gen_range(0.1..0.3),
            phase: rng.gen_range(0.0..2.0 * PI),
        },
        // whole approach and rebound cycles: the bout ends where it began
        Template::Headbutt => Kinematics::Bump {
            g0: rng.gen_range(0.0..0.04),
            amp: rng.gen_range(0.05..0.12),
            freq: (rng.gen_range(1.5..2.2) * duration).round().max(1.0) / duration,
        },
        // slow jostling contact, then the partner yields and the gap opens
        Template::Displacement => {
            let t_start = rng.gen_range(0.15..0.35) * duration;
            let rise = rng.gen_range(0.06..0.14);
            Kinematics::Shove {
                g0: rng.gen_range(0.0..0.04),
                speed: rise / (duration - t_start),
                t_start,
                tau: 0.3,
                amp: rng.gen_range(0.08..0.14),
                freq: rng.gen_range(0.8..1.1),
            }
        }
        Template::PassiveProximity => Kinematics::Constant {
            g: rng.gen_range(0.08..0.25),
        },
        Template::NoContact => Kinematics::Constant {
            g: rng.gen_range(1.2..2.0),
        },
    }
}

pub fn frame_count(duration_s: f64, fps: f64) -> usize {
    (duration_s * fps).round() as usize + 1
}

/// Noisy detection of a cow whose true keypoints are `points`. The box is
/// the noise-free keypoint extent.
pub fn detect(points: &[(f64, f64); KEYPOINT_COUNT], identity: &str, sigma_px: f64, occlusion: f64, rng: &mut impl Rng) -> Detection {
    let noise = Normal::new(0.0, sigma_px.max(0.0)).expect("finite sigma");
    let kps: Vec<Keypoint> = points
        .iter()
        .map(|&(x, y)| {
            let (nx, ny) = if sigma_px > 0.0 {
                (noise.sample(rng), noise.sample(rng))
            } else {
                (0.0, 0.0)
            };
            if occlusion > 0.0 && rng.gen_bool(occlusion) {
                Keypoint::missing()
            } else {
                Keypoint {
                    confidence: KEYPOINT_CONFIDENCE,
                    ..Keypoint::visible(x + nx, y + ny)
                }
            }
        })
        .collect();
    Detection {
        bbox: points_box(points),
        confidence: DETECTION_CONFIDENCE,
        identity: Some(identity.to_string()),
        skeleton: Some(Skeleton::from_vec(kps).expect("27 keypoints")),
    }
}

pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticClip> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kinematics = sample_kinematics(spec.template, spec.duration_s, &mut rng);
    let layout = Layout {
        side: if rng.gen_bool(0.5) { 1 } else { -1 },
        contact: if rng.gen_bool(0.5) { Contact::Shoulder } else { Contact::Hip },
        engaged: spec.template.engaged(),
    };
    let norm = layout.normalizer();
    let a_center = (1600.0 + rng.gen_range(-200.0..200.0), 1000.0 + rng.gen_range(-150.0..150.0));
    let meta = StreamMeta {
        fps: spec.fps,
        image_width: IMAGE_SIZE.0,
        image_height: IMAGE_SIZE.1,
        source_id: format!("synth-{:?}-{}", spec.template, spec.seed).to_lowercase(),
    };
    let n = frame_count(spec.duration_s, spec.fps);
    let sigma_px = spec.noise_sigma * norm;
    let a_points = layout.a_points(a_center);
    let mut frames = Vec::with_capacity(n);
    let mut analytic = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / spec.fps;
        let g = kinematics.value(t);
        analytic.push(g);
        let b_points = body_points(layout.b_center(a_center, g), layout.b_facing(), 0.0);
        let dets = vec![
            detect(&a_points, &spec.identities.0, sigma_px, spec.occlusion_rate, &mut rng),
            detect(&b_points, &spec.identities.1, sigma_px, spec.occlusion_rate, &mut rng),
        ];
        frames.push(FrameRecord::new(k as u64, spec.fps, dets));
    }
    Ok(SyntheticClip {
        spec: spec.clone(),
        label: spec.template.label(),
        kinematics,
        layout,
        normalizer: norm,
        meta,
        frames,
        analytic,
    })
}

/// Tracks built directly from identity labels, numbered 1.. in identity
/// order.
pub fn ground_truth_tracks(frames: &[FrameRecord]) -> Vec<Track> {
    let mut by_id: std::collections::BTreeMap<String, Vec<Observation>> = Default::default();
    for f in frames {
        for d in &f.detections {
            let Some(id) = &d.identity else { continue };
            by_id.entry(id.clone()).or_default().push(Observation {
                frame_index: f.frame_index,
                bbox: d.bbox,
                confidence: d.confidence,
                identity: d.identity.clone(),
                skeleton: d.skeleton.clone(),
            });
        }
    }
    by_id
        .into_values()
        .enumerate()
        .map(|(i, h)| Track::from_history(i as u64 + 1, h, 0.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_per_class: usize,
    pub roster: Vec<String>,
    pub noise_sigma: f64,
    pub occlusion_rate: f64,
    /// Share of the final corpus made of passive-proximity distractors.
    pub distractor_fraction: f64,
    pub fps: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Set by the caller; not part of the config file.
    #[serde(skip)]
    pub seed: u64,
}

pub fn default_roster(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("cow{:02}", i + 1)).collect()
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_per_class: 50,
            roster: default_roster(6),
            noise_sigma: 0.01,
            occlusion_rate: 0.02,
            distractor_fraction: 0.25,
            fps: 30.0,
            min_duration_s: 6.0,
            max_duration_s: 15.0,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn distractor_count(&self) -> usize {
        let f = self.distractor_fraction;
        if f <= 0.0 {
            0
        } else {
            ((3 * self.n_per_class) as f64 * f / (1.0 - f)).round() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusClip {
    pub clip_id: String,
    pub group_key: GroupKey,
    pub clip: SyntheticClip,
}

/// Balanced labeled clips plus distractors. Dyads are dealt round-robin
/// from a seeded shuffle of all roster pairs.
pub fn corpus(spec: &CorpusSpec) -> Result<Vec<CorpusClip>> {
    let mut roster = spec.roster.clone();
    roster.sort();
    roster.dedup();
    if roster.len() < 2 {
        return Err(Error::RosterTooSmall(roster.len()));
    }
    if !(0.0..1.0).contains(&spec.distractor_fraction) || !(spec.min_duration_s > 0.0 && spec.max_duration_s >= spec.min_duration_s) {
        return Err(Error::Config("corpus distractor fraction must be in [0, 1) and durations ordered".into()));
    }
    let mut pairs: Vec<(String, String)> = Vec::new();
    for i in 0..roster.len() {
        for j in i + 1..roster.len() {
            pairs.push((roster[i].clone(), roster[j].clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pairs.shuffle(&mut rng);
    let mut templates: Vec<Template> = (0..spec.n_per_class).flat_map(|_| Template::INTERACTIONS).collect();
    templates.extend(std::iter::repeat(Template::PassiveProximity).take(spec.distractor_count()));
    let jobs: Vec<(usize, Template)> = templates.into_iter().enumerate().collect();
    par::try_map(&jobs, |&(j, template)| {
        let seed = par::derive_seed(spec.seed, j as u64);
        let mut local = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = pairs[j % pairs.len()].clone();
        let identities = if local.gen_bool(0.5) { (a, b) } else { (b, a) };
        let duration_s = if spec.max_duration_s > spec.min_duration_s {
            local.gen_range(spec.min_duration_s..spec.max_duration_s)
        } else {
            spec.min_duration_s
        };
        let clip = generate(&ScenarioSpec {
            template,
            duration_s,
            fps: spec.fps,
            noise_sigma: spec.noise_sigma,
            occlusion_rate: spec.occlusion_rate,
            seed: local.gen(),
            identities: identities.clone(),
        })?;
        Ok(CorpusClip {
            clip_id: format!("clip{j:04}"),
            group_key: GroupKey::new(identities.0, identities.1),
            clip,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEvent {
    pub pair: GroupKey,
    pub label: Label,
    pub frame_span: (u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub roster: Vec<String>,
    pub events: usize,
    pub fps: f64,
    pub noise_sigma: f64,
    pub occlusion_rate: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Walking time from home to the partner and back, each way.
    pub approach_s: f64,
    pub rest_s: f64,
    /// Spacing of sparse ground-truth annotation frames.
    pub gt_every_s: f64,
    /// Set by the caller; not part of the config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            roster: default_roster(6),
            events: 12,
            fps: 30.0,
            noise_sigma: 0.0,
            occlusion_rate: 0.0,
            min_duration_s: 6.0,
            max_duration_s: 12.0,
            approach_s: 5.0,
            rest_s: 1.0,
            gt_every_s: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub meta: StreamMeta,
    pub frames: Vec<FrameRecord>,
    pub events: Vec<GtEvent>,
    pub ground_truth: Vec<GroundTruthFrame>,
}

const SCENE_CENTER: (f64, f64) = (1920.0, 1080.0);
const SCENE_RADIUS: f64 = 600.0;

/// A herd resting on a circle; events are played one at a time, the
/// initiator walking in from its home, interacting beside its partner, and
/// walking back.
pub fn scene(spec: &SceneSpec) -> Result<Scene> {
    let mut roster = spec.roster.clone();
    roster.sort();
    roster.dedup();
    if roster.len() < 2 {
        return Err(Error::RosterTooSmall(roster.len()));
    }
    if !(spec.fps > 0.0) || !(spec.approach_s > 0.0) || !(spec.min_duration_s > 0.0 && spec.max_duration_s >= spec.min_duration_s) {
        return Err(Error::Config("scene timing must be positive and ordered".into()));
    }
    let n = roster.len();
    let homes: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let th = 2.0 * PI * i as f64 / n as f64;
            (SCENE_CENTER.0 + SCENE_RADIUS * th.cos(), SCENE_CENTER.1 + SCENE_RADIUS * th.sin())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.shuffle(&mut rng);

    // per-frame state: center, facing, head turn for every cow
    let mut timeline: Vec<Vec<((f64, f64), f64, f64)>> = Vec::new();
    let idle: Vec<((f64, f64), f64, f64)> = homes.iter().map(|h| (*h, 1.0, 0.0)).collect();
    let na = frame_count(spec.approach_s, spec.fps) - 1;
    // head turns progressively over the last (first) second of the approach (return)
    let nt = (frame_count(1.0, spec.fps) - 1).clamp(1, na.max(1));
    let nr = frame_count(spec.rest_s, spec.fps) - 1;
    // time fraction of the approach spent on the final lateral step
    let step = (LATERAL_STEP_S / spec.approach_s).min(0.5);
    let mut events = Vec::new();
    for e in 0..spec.events {
        let template = Template::INTERACTIONS[e % 3];
        let (mut ia, mut ib) = pairs[e % pairs.len()];
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut ia, &mut ib);
        }
        let duration = rng.gen_range(spec.min_duration_s..=spec.max_duration_s);
        let kin = sample_kinematics(template, duration, &mut rng);
        let side: i8 = if homes[ia].1 <= SCENE_CENTER.1 { 1 } else { -1 };
        let layout = Layout {
            side,
            contact: if rng.gen_bool(0.5) { Contact::Shoulder } else { Contact::Hip },
            engaged: true,
        };
        let nd = frame_count(duration, spec.fps);
        let start = timeline.len() as u64 + na as u64;
        let facing = layout.b_facing();
        let spot0 = layout.b_center(homes[ia], kin.value(0.0));
        for k in 0..na {
            let mut st = idle.clone();
            let turn = (k + nt).saturating_sub(na) as f64 / nt as f64;
            st[ia] = (homes[ia], 1.0, turn * side as f64);
            st[ib] = (walk_path(homes[ib], spot0, side, step, k as f64 / na as f64), facing, 0.0);
            timeline.push(st);
        }
        for k in 0..nd {
            let t = k as f64 / spec.fps;
            let mut st = idle.clone();
            st[ia] = (homes[ia], 1.0, layout.a_turn() as f64);
            st[ib] = (layout.b_center(homes[ia], kin.value(t)), facing, 0.0);
            timeline.push(st);
        }
        let spot1 = layout.b_center(homes[ia], kin.value((nd - 1) as f64 / spec.fps));
        for k in 1..=na {
            let mut st = idle.clone();
            let turn = nt.saturating_sub(k) as f64 / nt as f64;
            st[ia] = (homes[ia], 1.0, turn * side as f64);
            st[ib] = (walk_path(homes[ib], spot1, side, step, 1.0 - k as f64 / na as f64), facing, 0.0);
            timeline.push(st);
        }
        for _ in 0..nr {
            timeline.push(idle.clone());
        }
        events.push(GtEvent {
            pair: GroupKey::new(roster[ia].clone(), roster[ib].clone()),
            label: template.label(),
            frame_span: (start, start + nd as u64 - 1),
        });
    }
    let sigma_px = spec.noise_sigma * Layout { side: 1, contact: Contact::Shoulder, engaged: true }.normalizer();
    let gt_step = ((spec.gt_every_s * spec.fps).round() as usize).max(1);
    let mut frames = Vec::with_capacity(timeline.len());
    let mut ground_truth = Vec::new();
    for (k, st) in timeline.iter().enumerate() {
        let mut dets = Vec::with_capacity(n);
        let mut gt_boxes = Vec::new();
        for (i, &(c, facing, turn)) in st.iter().enumerate() {
            let pts = body_points(c, facing, turn);
            let d = detect(&pts, &roster[i], sigma_px, spec.occlusion_rate, &mut rng);
            gt_boxes.push((roster[i].clone(), d.bbox));
            dets.push(d);
        }
        if k % gt_step == 0 {
            ground_truth.push(GroundTruthFrame {
                frame_index: k as u64,
                boxes: gt_boxes,
            });
        }
        frames.push(FrameRecord::new(k as u64, spec.fps, dets));
    }
    Ok(Scene {
        meta: StreamMeta {
            fps: spec.fps,
            image_width: IMAGE_SIZE.0,
            image_height: IMAGE_SIZE.1,
            source_id: format!("synth-scene-{}", spec.seed),
        },
        frames,
        events,
        ground_truth,
    })
}

/// Eases from rest to rest over [0, 1].
fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

/// Duration of the final lateral step; slow enough that consecutive boxes
/// of the thin vertical extent keep a high overlap.
const LATERAL_STEP_S: f64 = 2.0;

/// Lateral offset of the staging point from the spot, px; puts the
/// staging point outside the proximity gate.
const STAGING_CLEARANCE: f64 = 250.0;

/// Position at time fraction `u` of a walk from `home` to `spot`: to a
/// staging point beside the spot on the `side` axis, then a lateral step
/// in taking the last `step` of the time. Each leg starts and ends at rest,
/// so the walker never crosses the standing cow's body.
fn walk_path(home: (f64, f64), spot: (f64, f64), side: i8, step: f64, u: f64) -> (f64, f64) {
    let staging = (spot.0, spot.1 + side as f64 * STAGING_CLEARANCE);
    let split = 1.0 - step;
    if u < split {
        lerp(home, staging, smoothstep(u / split))
    } else {
        lerp(staging, spot, smoothstep((u - split) / step))
    }
}

fn lerp(a: (f64, f64), b: (f64, f64), t: f64) -> (f64, f64) {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}
