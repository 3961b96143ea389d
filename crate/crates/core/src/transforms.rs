//! Rigid transforms, a named-frame transform tree, and the transform chains
//! used for camera calibration, pose labeling and canonical placement.
//!
//! Naming follows `t_<a>_<b>` = pose of frame `b` expressed in frame `a`,
//! so `t_a_b.compose(&t_b_c) == t_a_c`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::Vec3;
use crate::rotations::{fmt_real, RotationError, UnitQuaternion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("frame `{0}` already has a parent")]
    DuplicateChild(FrameId),
    #[error("edge {parent} -> {child} would create a cycle")]
    CycleDetected { parent: FrameId, child: FrameId },
    #[error("unknown frame `{0}`")]
    UnknownFrame(FrameId),
    #[error("frames `{0}` and `{1}` are not connected")]
    Disconnected(FrameId, FrameId),
    #[error("frame `{0}` has no parent edge to replace")]
    NoParent(FrameId),
    #[error("frame name must be non-empty")]
    EmptyFrameName,
    #[error("translation is not finite")]
    NonFinite,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Rotation(#[from] RotationError),
}

/// A rigid transform: rotate, then translate (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: UnitQuaternion,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: UnitQuaternion::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: UnitQuaternion, translation: Vec3) -> Result<Self, TransformError> {
        if !translation.is_finite() {
            return Err(TransformError::NonFinite);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_rotation(rotation: UnitQuaternion) -> Self {
        Self {
            rotation,
            translation: Vec3::ZERO,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: UnitQuaternion::IDENTITY,
            translation,
        }
    }

    /// `self * rhs`: `(R_a R_b, R_a t_b + t_a)`.
    pub fn compose(&self, rhs: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.multiply(&rhs.rotation),
            translation: self.rotation.rotate(rhs.translation) + self.translation,
        }
    }

    /// `(R^-1, -R^-1 t)`.
    pub fn invert(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform {
            rotation: inv,
            translation: -inv.rotate(self.translation),
        }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Row-major homogeneous 4x4 matrix.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.to_matrix().rows();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// `w x y z tx ty tz`.
impl fmt::Display for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.translation;
        write!(
            f,
            "{} {} {} {}",
            self.rotation,
            fmt_real(t.x),
            fmt_real(t.y),
            fmt_real(t.z)
        )
    }
}

impl FromStr for RigidTransform {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let vals = parse_reals(s).map_err(|msg| TransformError::Parse { line: 0, msg })?;
        if vals.len() != 7 {
            return Err(TransformError::Parse {
                line: 0,
                msg: format!("expected 7 values, got {}", vals.len()),
            });
        }
        let q = UnitQuaternion::from_components([vals[0], vals[1], vals[2], vals[3]])?;
        RigidTransform::new(q, Vec3::new(vals[4], vals[5], vals[6]))
    }
}

fn parse_reals(s: &str) -> Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

/// Camera extrinsics from the tag chain:
/// `T^base_camera = T^base_wrist * T^wrist_aruco * T^aruco_camera`.
pub fn calibrate_camera(
    t_base_wrist: &RigidTransform,
    t_wrist_aruco: &RigidTransform,
    t_aruco_camera: &RigidTransform,
) -> RigidTransform {
    t_base_wrist.compose(t_wrist_aruco).compose(t_aruco_camera)
}

/// Object pose label in the camera frame from robot kinematics:
/// `T^camera_object = (T^base_camera)^-1 * T^base_wrist * T^wrist_object`.
pub fn label_object_pose(
    t_base_camera: &RigidTransform,
    t_base_wrist: &RigidTransform,
    t_wrist_object: &RigidTransform,
) -> RigidTransform {
    t_base_camera
        .invert()
        .compose(t_base_wrist)
        .compose(t_wrist_object)
}

/// Wrist goal that brings a rigidly held object to `t_base_object_canonical`.
///
/// With the object treated as the end effector,
/// `T^base_wrist_goal * T^wrist_object = T^base_object_canonical` gives
/// `T^base_wrist_goal = T^base_object_canonical * (T^wrist_object)^-1`.
/// The object's current pose does not enter.
pub fn canonical_goal(
    t_wrist_object: &RigidTransform,
    t_base_object_canonical: &RigidTransform,
) -> RigidTransform {
    t_base_object_canonical.compose(&t_wrist_object.invert())
}

/// Name of a coordinate frame in a [`TransformTree`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId(String);

impl FrameId {
    pub fn new(name: impl Into<String>) -> Result<Self, TransformError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(TransformError::EmptyFrameName);
        }
        Ok(FrameId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FrameId {
    /// Panics on an empty or whitespace-containing name; use [`FrameId::new`]
    /// for untrusted input.
    fn from(s: &str) -> Self {
        FrameId::new(s).expect("invalid frame name")
    }
}

#[derive(Debug, Clone)]
struct ParentEdge {
    parent: FrameId,
    t_parent_child: RigidTransform,
}

/// Forest of named frames. Each frame has at most one parent edge storing
/// `T^parent_child`.
#[derive(Debug, Clone, Default)]
pub struct TransformTree {
    frames: BTreeSet<FrameId>,
    parents: BTreeMap<FrameId, ParentEdge>,
}

impl TransformTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a frame without edges.
    pub fn add_frame(&mut self, frame: FrameId) {
        self.frames.insert(frame);
    }

    pub fn contains(&self, frame: &FrameId) -> bool {
        self.frames.contains(frame)
    }

    pub fn frames(&self) -> impl Iterator<Item = &FrameId> {
        self.frames.iter()
    }

    pub fn parent_of(&self, frame: &FrameId) -> Option<&FrameId> {
        self.parents.get(frame).map(|e| &e.parent)
    }

    /// Edges as `(parent, child, T^parent_child)`, ordered by child name.
    pub fn edges(&self) -> impl Iterator<Item = (&FrameId, &FrameId, &RigidTransform)> {
        self.parents
            .iter()
            .map(|(child, e)| (&e.parent, child, &e.t_parent_child))
    }

    pub fn add_edge(
        &mut self,
        parent: FrameId,
        child: FrameId,
        t_parent_child: RigidTransform,
    ) -> Result<(), TransformError> {
        if self.parents.contains_key(&child) {
            return Err(TransformError::DuplicateChild(child));
        }
        if parent == child || self.root_of(&parent) == child {
            return Err(TransformError::CycleDetected { parent, child });
        }
        self.frames.insert(parent.clone());
        self.frames.insert(child.clone());
        self.parents.insert(
            child,
            ParentEdge {
                parent,
                t_parent_child,
            },
        );
        Ok(())
    }

    /// Replace the transform of an existing parent edge (e.g. a re-grasp).
    pub fn replace_edge(
        &mut self,
        child: &FrameId,
        t_parent_child: RigidTransform,
    ) -> Result<(), TransformError> {
        match self.parents.get_mut(child) {
            Some(edge) => {
                edge.t_parent_child = t_parent_child;
                Ok(())
            }
            None => Err(TransformError::NoParent(child.clone())),
        }
    }

    /// Remove a frame's parent edge, leaving it as a root.
    pub fn detach(&mut self, child: &FrameId) -> Option<RigidTransform> {
        self.parents.remove(child).map(|e| e.t_parent_child)
    }

    fn root_of(&self, frame: &FrameId) -> FrameId {
        let mut cur = frame;
        while let Some(e) = self.parents.get(cur) {
            cur = &e.parent;
        }
        cur.clone()
    }

    /// Frames from `frame` up to its root, inclusive.
    fn ancestry(&self, frame: &FrameId) -> Vec<FrameId> {
        let mut chain = vec![frame.clone()];
        let mut cur = frame;
        while let Some(e) = self.parents.get(cur) {
            chain.push(e.parent.clone());
            cur = &e.parent;
        }
        chain
    }

    /// `T^ancestor_frame`, composed along the parent chain.
    fn pose_in_ancestor(&self, frame: &FrameId, ancestor: &FrameId) -> RigidTransform {
        let mut t = RigidTransform::IDENTITY;
        let mut cur = frame;
        while cur != ancestor {
            let e = &self.parents[cur];
            t = e.t_parent_child.compose(&t);
            cur = &e.parent;
        }
        t
    }

    /// `T^from_to`: the pose of `to` expressed in `from`, composed along the
    /// unique tree path through the lowest common ancestor.
    pub fn lookup(&self, from: &FrameId, to: &FrameId) -> Result<RigidTransform, TransformError> {
        for f in [from, to] {
            if !self.frames.contains(f) {
                return Err(TransformError::UnknownFrame(f.clone()));
            }
        }
        let up_from = self.ancestry(from);
        let up_to = self.ancestry(to);
        let to_set: BTreeSet<&FrameId> = up_to.iter().collect();
        let common = up_from
            .iter()
            .find(|f| to_set.contains(f))
            .ok_or_else(|| TransformError::Disconnected(from.clone(), to.clone()))?;
        let t_common_from = self.pose_in_ancestor(from, common);
        let t_common_to = self.pose_in_ancestor(to, common);
        Ok(t_common_from.invert().compose(&t_common_to))
    }

    /// Parse the line format `parent child w x y z tx ty tz`. Blank lines and
    /// `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, TransformError> {
        let mut tree = TransformTree::new();
        for (parent, child, t) in parse_transform_lines(text)? {
            tree.add_edge(parent, child, t)?;
        }
        Ok(tree)
    }

    /// Serialize edges in the line format accepted by [`TransformTree::parse`].
    pub fn to_text(&self) -> String {
        self.edges()
            .map(|(p, c, t)| format!("{p} {c} {t}\n"))
            .collect()
    }
}

/// Parse transform lines without building a tree (order preserved).
pub fn parse_transform_lines(
    text: &str,
) -> Result<Vec<(FrameId, FrameId, RigidTransform)>, TransformError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| TransformError::Parse { line: i + 1, msg };
        let mut tokens = line.split_whitespace();
        let parent = FrameId::new(tokens.next().unwrap_or_default()).map_err(|e| err(e.to_string()))?;
        let child = FrameId::new(tokens.next().unwrap_or_default()).map_err(|e| err(e.to_string()))?;
        let rest: Vec<&str> = tokens.collect();
        let t: RigidTransform = rest
            .join(" ")
            .parse()
            .map_err(|e: TransformError| err(e.to_string()))?;
        out.push((parent, child, t));
    }
    Ok(out)
}

/// Single transform line for `parent child`.
pub fn format_transform_line(parent: &FrameId, child: &FrameId, t: &RigidTransform) -> String {
    format!("{parent} {child} {t}")
}
