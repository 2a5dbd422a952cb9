//! Shared domain values: boxes, keypoints, skeletons and frame records.
//!
//! Coordinates are pixel floats in image space with `y` pointing down.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of anatomical keypoints per animal.
pub const KEYPOINT_COUNT: usize = 27;

/// Index order of the 27-point anatomical schema.
pub const KEYPOINT_NAMES: [&str; KEYPOINT_COUNT] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "poll",
    "throat",
    "withers",
    "mid_back",
    "hip",
    "tail_base",
    "tail_mid",
    "tail_tip",
    "left_shoulder",
    "left_elbow",
    "left_front_knee",
    "left_front_hoof",
    "right_shoulder",
    "right_elbow",
    "right_front_knee",
    "right_front_hoof",
    "left_hip",
    "left_hock",
    "left_rear_hoof",
    "right_hip",
    "right_hock",
    "right_rear_hoof",
];

/// Face-region keypoints (nose, eyes, ears) used for head-to-head distance.
pub const HEAD_GROUP: [usize; 5] = [0, 1, 2, 3, 4];

/// Head keypoints that follow a head turn (face plus poll and throat).
pub const HEAD_SEGMENT: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];

pub fn keypoint_index(name: &str) -> Option<usize> {
    KEYPOINT_NAMES.iter().position(|n| *n == name)
}

/// Axis-aligned box in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox { x1, y1, x2, y2 })
        }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        BBox {
            x1: cx - width / 2.0,
            y1: cy - height / 2.0,
            x2: cx + width / 2.0,
            y2: cy + height / 2.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
            && self.x2 >= self.x1
            && self.y2 >= self.y1
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        BBox {
            x1: self.x1 * s,
            y1: self.y1 * s,
            x2: self.x2 * s,
            y2: self.y2 * s,
        }
    }

    /// Length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Intersection over union; 0 for disjoint or degenerate pairs.
    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = self.x2.min(other.x2) - self.x1.max(other.x1);
        let ih = self.y2.min(other.y2) - self.y1.max(other.y1);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            return 0.0;
        }
        (inter / union).clamp(0.0, 1.0)
    }

    /// Euclidean distance between the two box centers.
    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }

    /// Linear interpolation between two boxes, `t` in [0, 1].
    pub fn lerp(&self, other: &BBox, t: f64) -> BBox {
        let l = |a: f64, b: f64| a + (b - a) * t;
        BBox {
            x1: l(self.x1, other.x1),
            y1: l(self.y1, other.y1),
            x2: l(self.x2, other.x2),
            y2: l(self.y2, other.y2),
        }
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

pub fn diagonal(b: &BBox) -> f64 {
    b.diagonal()
}

pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    a.center_distance(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Visible,
    Occluded,
    Missing,
}

/// One anatomical landmark. Missing points carry no usable position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visibility: Visibility,
    pub confidence: f64,
}

impl Keypoint {
    pub fn visible(x: f64, y: f64) -> Self {
        Keypoint {
            x,
            y,
            visibility: Visibility::Visible,
            confidence: 1.0,
        }
    }

    pub fn missing() -> Self {
        Keypoint {
            x: 0.0,
            y: 0.0,
            visibility: Visibility::Missing,
            confidence: 0.0,
        }
    }

    /// Occluded points still participate in geometry; missing ones never do.
    pub fn is_present(&self) -> bool {
        self.visibility != Visibility::Missing
    }

    pub fn position(&self) -> Option<(f64, f64)> {
        self.is_present().then_some((self.x, self.y))
    }
}

/// Exactly 27 keypoints in [`KEYPOINT_NAMES`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub points: [Keypoint; KEYPOINT_COUNT],
}

impl Skeleton {
    pub fn new(points: [Keypoint; KEYPOINT_COUNT]) -> Self {
        Skeleton { points }
    }

    pub fn from_vec(points: Vec<Keypoint>) -> Result<Self> {
        let n = points.len();
        let points: [Keypoint; KEYPOINT_COUNT] = points.try_into().map_err(|_| {
            Error::schema(0, "skeleton", format!("expected 27 keypoints, got {n}"))
        })?;
        Ok(Skeleton { points })
    }

    pub fn get(&self, name: &str) -> Option<&Keypoint> {
        keypoint_index(name).map(|i| &self.points[i])
    }

    pub fn present_count(&self) -> usize {
        self.points.iter().filter(|k| k.is_present()).count()
    }
}

/// One upstream detection with optional identity label and pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Skeleton>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub detections: Vec<Detection>,
}

impl FrameRecord {
    pub fn new(frame_index: u64, fps: f64, detections: Vec<Detection>) -> Self {
        FrameRecord {
            frame_index,
            timestamp_s: frame_index as f64 / fps,
            detections,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub fps: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub source_id: String,
}

impl StreamMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be > 0, got {}", self.fps)));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config("image dimensions must be > 0".into()));
        }
        Ok(())
    }

    /// Converts a duration to a whole number of frames, rounding up.
    pub fn frames_ceil(&self, seconds: f64) -> usize {
        frames_ceil(seconds, self.fps)
    }
}

/// Interaction label. The first three are the trainable classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    LickGroom,
    Headbutt,
    Displacement,
    NoInteraction,
    /// Binary "something happened" label used by the occurrence baseline.
    InteractionPresent,
}

impl Label {
    pub const CLASSES: [Label; 3] = [Label::LickGroom, Label::Headbutt, Label::Displacement];

    pub fn is_class(self) -> bool {
        Label::CLASSES.contains(&self)
    }

    pub fn is_affiliative(self) -> bool {
        self == Label::LickGroom
    }

    pub fn is_agonistic(self) -> bool {
        matches!(self, Label::Headbutt | Label::Displacement)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::LickGroom => "lick_groom",
            Label::Headbutt => "headbutt",
            Label::Displacement => "displacement",
            Label::NoInteraction => "no_interaction",
            Label::InteractionPresent => "interaction_present",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        [
            Label::LickGroom,
            Label::Headbutt,
            Label::Displacement,
            Label::NoInteraction,
            Label::InteractionPresent,
        ]
        .into_iter()
        .find(|l| l.as_str() == s)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `ceil(seconds * fps)` robust to representation error in the product.
pub fn frames_ceil(seconds: f64, fps: f64) -> usize {
    let raw = seconds * fps;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded.max(0.0) as usize
    } else {
        raw.ceil().max(0.0) as usize
    }
}
