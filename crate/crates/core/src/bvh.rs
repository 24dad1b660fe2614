//! BVH (Biovision Hierarchy) ingestion.
//!
//! Only the subset needed to recover joint positions is supported: one ROOT,
//! nested JOINT and End Site blocks, and a MOTION section with one frame per
//! line. Rotations are Euler angles in degrees, composed in the order the
//! channels are declared.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

use crate::skeleton::{
    forward_kinematics, to_root_relative, AnimationClip, Joint, RoleMap, Skeleton, SkeletonError, Vec3,
    ROLE_PELVIS,
};

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {kind}")]
pub struct BvhError {
    pub line: usize,
    pub kind: BvhErrorKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum BvhErrorKind {
    #[error("expected {expected}, found `{found}`")]
    Unexpected { expected: String, found: String },
    #[error("unexpected end of input, expected {0}")]
    Eof(String),
    #[error("unbalanced braces")]
    UnbalancedBraces,
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("invalid number `{0}`")]
    InvalidNumber(String),
    #[error("CHANNELS declares {declared} channels but lists {listed}")]
    ChannelCount { declared: usize, listed: usize },
    #[error("MOTION section declares {declared} frames but contains {actual}")]
    FrameCount { declared: usize, actual: usize },
    #[error("frame row has {actual} values, expected {expected}")]
    RowLength { expected: usize, actual: usize },
    #[error("frame time must be positive, got {0}")]
    FrameTime(f64),
    #[error("invalid skeleton: {0}")]
    Skeleton(SkeletonError),
}

#[derive(Debug, Error, PartialEq)]
pub enum ClipError {
    #[error("no joint is mapped to the pelvis role")]
    MissingPelvis,
    #[error("frame time must be positive and finite, got {0}")]
    FrameTime(f64),
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: SkeletonError,
    },
    #[error(transparent)]
    Clip(#[from] SkeletonError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl FromStr for Channel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "xposition" => Channel::Xposition,
            "yposition" => Channel::Yposition,
            "zposition" => Channel::Zposition,
            "xrotation" => Channel::Xrotation,
            "yrotation" => Channel::Yrotation,
            "zrotation" => Channel::Zrotation,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// An End Site: a terminal offset under `parent`, carrying no channels.
#[derive(Debug, Clone, PartialEq)]
pub struct EndSite {
    pub parent: usize,
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvhDocument {
    pub skeleton: Skeleton,
    /// Channels per joint, in skeleton order.
    pub channels: Vec<Vec<Channel>>,
    pub end_sites: Vec<EndSite>,
    pub frames: Vec<Vec<f64>>,
    pub frame_time: f64,
}

#[derive(Debug)]
struct Token<'a> {
    text: &'a str,
    line: usize,
}

struct Tokens<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            for word in line.split_whitespace() {
                split_braces(word, i + 1, &mut tokens);
            }
        }
        let last_line = text.lines().count().max(1);
        Self { tokens, pos: 0, last_line }
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self, expected: &str) -> Result<&Token<'a>, BvhError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t)
            }
            None => Err(BvhError {
                line: self.last_line,
                kind: BvhErrorKind::Eof(expected.to_string()),
            }),
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<usize, BvhError> {
        let t = self.next(keyword)?;
        if t.text.eq_ignore_ascii_case(keyword) {
            Ok(t.line)
        } else {
            Err(unexpected(t, keyword))
        }
    }

    fn number<T: FromStr>(&mut self, what: &str) -> Result<T, BvhError> {
        let t = self.next(what)?;
        t.text.parse().map_err(|_| BvhError {
            line: t.line,
            kind: BvhErrorKind::InvalidNumber(t.text.to_string()),
        })
    }

    fn vec3(&mut self) -> Result<[f64; 3], BvhError> {
        Ok([self.number("offset x")?, self.number("offset y")?, self.number("offset z")?])
    }
}

fn split_braces<'a>(word: &'a str, line: usize, out: &mut Vec<Token<'a>>) {
    let mut start = 0;
    for (i, ch) in word.char_indices() {
        if ch == '{' || ch == '}' {
            if start < i {
                out.push(Token { text: &word[start..i], line });
            }
            out.push(Token { text: &word[i..i + 1], line });
            start = i + 1;
        }
    }
    if start < word.len() {
        out.push(Token { text: &word[start..], line });
    }
}

fn unexpected(t: &Token<'_>, expected: &str) -> BvhError {
    let kind = if t.text == "}" || t.text == "{" {
        BvhErrorKind::UnbalancedBraces
    } else {
        BvhErrorKind::Unexpected {
            expected: expected.to_string(),
            found: t.text.to_string(),
        }
    };
    BvhError { line: t.line, kind }
}

struct HierarchyBuilder {
    joints: Vec<Joint>,
    channels: Vec<Vec<Channel>>,
    end_sites: Vec<EndSite>,
}

impl HierarchyBuilder {
    /// Parses a joint body after its name; the opening brace is next.
    fn joint_body(&mut self, tokens: &mut Tokens<'_>, name: String, parent: Option<usize>) -> Result<(), BvhError> {
        tokens.expect("{")?;
        let index = self.joints.len();
        tokens.expect("OFFSET")?;
        let offset = tokens.vec3()?;
        self.joints.push(Joint::new(name, parent, offset));

        let mut channels = Vec::new();
        if tokens.peek().is_some_and(|t| t.text.eq_ignore_ascii_case("CHANNELS")) {
            let line = tokens.expect("CHANNELS")?;
            let declared: usize = tokens.number("channel count")?;
            for _ in 0..declared {
                let t = tokens.next("channel name")?;
                match t.text.parse::<Channel>() {
                    Ok(c) => channels.push(c),
                    Err(()) if t.text == "}" || t.text.eq_ignore_ascii_case("JOINT") => {
                        return Err(BvhError {
                            line,
                            kind: BvhErrorKind::ChannelCount {
                                declared,
                                listed: channels.len(),
                            },
                        })
                    }
                    Err(()) => {
                        return Err(BvhError {
                            line: t.line,
                            kind: BvhErrorKind::UnknownChannel(t.text.to_string()),
                        })
                    }
                }
            }
        }
        self.channels.push(channels);

        loop {
            let t = tokens.next("JOINT, End Site or `}`").map_err(|e| BvhError {
                line: e.line,
                kind: BvhErrorKind::UnbalancedBraces,
            })?;
            let line = t.line;
            match t.text {
                "}" => return Ok(()),
                s if s.eq_ignore_ascii_case("JOINT") => {
                    let name = joint_name(tokens)?;
                    self.joint_body(tokens, name, Some(index))?;
                }
                s if s.eq_ignore_ascii_case("End") => {
                    tokens.expect("Site")?;
                    tokens.expect("{")?;
                    tokens.expect("OFFSET")?;
                    let offset = tokens.vec3()?;
                    tokens.expect("}")?;
                    self.end_sites.push(EndSite { parent: index, offset });
                }
                s if s.eq_ignore_ascii_case("MOTION") || s.eq_ignore_ascii_case("ROOT") => {
                    return Err(BvhError {
                        line,
                        kind: BvhErrorKind::UnbalancedBraces,
                    })
                }
                _ => return Err(unexpected(t, "JOINT, End Site or `}`")),
            }
        }
    }
}

/// Joint names may contain spaces; everything up to the opening brace is the name.
fn joint_name(tokens: &mut Tokens<'_>) -> Result<String, BvhError> {
    let mut parts = Vec::new();
    while let Some(t) = tokens.peek() {
        if t.text == "{" {
            break;
        }
        if t.text == "}" {
            return Err(unexpected(t, "joint name"));
        }
        parts.push(t.text);
        tokens.pos += 1;
    }
    if parts.is_empty() {
        let t = tokens.next("joint name")?;
        return Err(unexpected(t, "joint name"));
    }
    Ok(parts.join(" "))
}

/// Parses a BVH document. Roles are resolved with the default name table.
pub fn parse_bvh(text: &str) -> Result<BvhDocument, BvhError> {
    parse_bvh_with_roles(text, &RoleMap::default())
}

pub fn parse_bvh_with_roles(text: &str, roles: &RoleMap) -> Result<BvhDocument, BvhError> {
    let (header, motion_line) = split_motion(text);
    let mut tokens = Tokens::new(header);
    if let Some(line) = motion_line {
        // Running out of hierarchy tokens means MOTION cut the hierarchy short.
        tokens.last_line = line;
    }
    tokens.expect("HIERARCHY")?;
    let root_line = tokens.expect("ROOT")?;
    let name = joint_name(&mut tokens)?;
    let mut builder = HierarchyBuilder {
        joints: Vec::new(),
        channels: Vec::new(),
        end_sites: Vec::new(),
    };
    builder.joint_body(&mut tokens, name, None)?;
    if let Some(t) = tokens.peek() {
        return Err(unexpected(t, "MOTION"));
    }
    let Some(motion_line) = motion_line else {
        return Err(BvhError {
            line: tokens.last_line,
            kind: BvhErrorKind::Eof("MOTION".into()),
        });
    };

    let role_map = roles.resolve(&builder.joints);
    let skeleton = Skeleton::new(builder.joints, role_map).map_err(|e| BvhError {
        line: root_line,
        kind: BvhErrorKind::Skeleton(e),
    })?;
    let width: usize = builder.channels.iter().map(Vec::len).sum();

    let (frames, frame_time) = parse_motion(text, motion_line, width)?;
    Ok(BvhDocument {
        skeleton,
        channels: builder.channels,
        end_sites: builder.end_sites,
        frames,
        frame_time,
    })
}

/// Returns the hierarchy text and the 1-based line of the MOTION keyword.
fn split_motion(text: &str) -> (&str, Option<usize>) {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if line.trim().eq_ignore_ascii_case("MOTION") {
            return (&text[..offset], Some(i + 1));
        }
        offset += line.len();
    }
    (text, None)
}

fn parse_motion(text: &str, motion_line: usize, width: usize) -> Result<(Vec<Vec<f64>>, f64), BvhError> {
    let mut lines = text
        .lines()
        .enumerate()
        .skip(motion_line)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let eof = |what: &str| BvhError {
        line: motion_line,
        kind: BvhErrorKind::Eof(what.to_string()),
    };
    let (frames_line, frames_decl) = lines.next().ok_or_else(|| eof("Frames:"))?;
    let declared: usize = header_value(frames_line, frames_decl, "Frames:")?;
    let (line, time_decl) = lines.next().ok_or_else(|| eof("Frame Time:"))?;
    let frame_time: f64 = header_value(line, time_decl, "Frame Time:")?;
    if !(frame_time.is_finite() && frame_time > 0.0) {
        return Err(BvhError {
            line,
            kind: BvhErrorKind::FrameTime(frame_time),
        });
    }

    let mut frames = Vec::with_capacity(declared);
    for (line, row) in lines {
        let values = row
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| BvhError {
                    line,
                    kind: BvhErrorKind::InvalidNumber(tok.to_string()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != width {
            return Err(BvhError {
                line,
                kind: BvhErrorKind::RowLength {
                    expected: width,
                    actual: values.len(),
                },
            });
        }
        frames.push(values);
    }
    if frames.len() != declared {
        return Err(BvhError {
            line: frames_line,
            kind: BvhErrorKind::FrameCount {
                declared,
                actual: frames.len(),
            },
        });
    }
    Ok((frames, frame_time))
}

fn header_value<T: FromStr>(line: usize, text: &str, key: &str) -> Result<T, BvhError> {
    let key_len = key.len();
    if text.len() < key_len || !text[..key_len].eq_ignore_ascii_case(key) {
        return Err(BvhError {
            line,
            kind: BvhErrorKind::Unexpected {
                expected: key.to_string(),
                found: text.to_string(),
            },
        });
    }
    let value = text[key_len..].trim();
    value.parse().map_err(|_| BvhError {
        line,
        kind: BvhErrorKind::InvalidNumber(value.to_string()),
    })
}

impl BvhDocument {
    /// Uniformly scales offsets and position channels, e.g. 0.01 for centimeters.
    pub fn scaled(mut self, factor: f64) -> Self {
        let joints: Vec<Joint> = self
            .skeleton
            .joints()
            .iter()
            .map(|j| Joint::new(j.name.clone(), j.parent, j.offset.map(|c| c * factor)))
            .collect();
        self.skeleton = Skeleton::new(joints, self.skeleton.roles().clone()).expect("scaling keeps topology");
        for site in &mut self.end_sites {
            site.offset = site.offset.map(|c| c * factor);
        }
        let positional: Vec<bool> = self
            .channels
            .iter()
            .flatten()
            .map(|c| matches!(c, Channel::Xposition | Channel::Yposition | Channel::Zposition))
            .collect();
        for row in &mut self.frames {
            for (v, &is_pos) in row.iter_mut().zip(&positional) {
                if is_pos {
                    *v *= factor;
                }
            }
        }
        self
    }

    /// Root translation and local joint rotations of one frame.
    pub fn frame_transforms(&self, frame: usize) -> (Vec3, Vec<UnitQuaternion<f64>>, Vec<Vec3>) {
        let row = &self.frames[frame];
        let mut cursor = 0;
        let mut rotations = Vec::with_capacity(self.channels.len());
        let mut translations = Vec::with_capacity(self.channels.len());
        for channels in &self.channels {
            let mut rotation = UnitQuaternion::identity();
            let mut translation = Vec3::zeros();
            for channel in channels {
                let value = row[cursor];
                cursor += 1;
                match channel {
                    Channel::Xposition => translation.x = value,
                    Channel::Yposition => translation.y = value,
                    Channel::Zposition => translation.z = value,
                    Channel::Xrotation => {
                        rotation *= UnitQuaternion::from_axis_angle(&Vector3::x_axis(), value.to_radians())
                    }
                    Channel::Yrotation => {
                        rotation *= UnitQuaternion::from_axis_angle(&Vector3::y_axis(), value.to_radians())
                    }
                    Channel::Zrotation => {
                        rotation *= UnitQuaternion::from_axis_angle(&Vector3::z_axis(), value.to_radians())
                    }
                }
            }
            rotations.push(rotation);
            translations.push(translation);
        }
        (translations[0], rotations, translations)
    }
}

/// Converts every frame to a root-relative pose.
///
/// Non-root position channels are added to the joint offset.
pub fn clip_from_bvh(doc: &BvhDocument, id: impl Into<String>) -> Result<AnimationClip, ClipError> {
    if !(doc.frame_time.is_finite() && doc.frame_time > 0.0) {
        return Err(ClipError::FrameTime(doc.frame_time));
    }
    let pelvis = doc.skeleton.role_index(ROLE_PELVIS).map_err(|_| ClipError::MissingPelvis)?;
    let has_joint_translation = doc.channels.iter().skip(1).any(|cs| {
        cs.iter()
            .any(|c| matches!(c, Channel::Xposition | Channel::Yposition | Channel::Zposition))
    });
    let mut poses = Vec::with_capacity(doc.frames.len());
    for frame in 0..doc.frames.len() {
        let (root, rotations, translations) = doc.frame_transforms(frame);
        let world = if has_joint_translation {
            let joints: Vec<Joint> = doc
                .skeleton
                .joints()
                .iter()
                .zip(&translations)
                .enumerate()
                .map(|(i, (j, t))| {
                    let extra = if i == 0 { Vec3::zeros() } else { *t };
                    let o = j.offset_vec() + extra;
                    Joint::new(j.name.clone(), j.parent, [o.x, o.y, o.z])
                })
                .collect();
            let skeleton = Skeleton::new(joints, BTreeMap::new())?;
            forward_kinematics(&skeleton, root, &rotations)
        } else {
            forward_kinematics(&doc.skeleton, root, &rotations)
        }
        .map_err(|source| ClipError::Frame { frame, source })?;
        poses.push(to_root_relative(&world, pelvis).map_err(|source| ClipError::Frame { frame, source })?);
    }
    Ok(AnimationClip::new(id, 1.0 / doc.frame_time, poses)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
}
MOTION
Frames: 1
Frame Time: 0.0333333
0 0 0 0 0 0
";

    const CHAIN: &str = "HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Spine
  {
    OFFSET 0 0 1
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0 0 1
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.04
5 0.9 2 0 0 0 0 0 0
0 0 0 0 0 180 0 0 0
";

    #[test]
    fn minimal_document() {
        let doc = parse_bvh(MINIMAL).unwrap();
        assert_eq!(doc.skeleton.joint_count(), 1);
        assert_eq!(doc.frames, vec![vec![0.0; 6]]);
        assert_eq!(doc.channels[0].len(), 6);
    }

    #[test]
    fn frame_count_mismatch_names_motion() {
        let text = MINIMAL.replace("Frames: 1", "Frames: 2");
        let err = parse_bvh(&text).unwrap_err();
        assert_eq!(err.kind, BvhErrorKind::FrameCount { declared: 2, actual: 1 });
        assert!(err.to_string().contains("MOTION"), "{err}");
        let decl = text.lines().position(|l| l.starts_with("Frames:")).unwrap() + 1;
        assert_eq!(err.line, decl);
    }

    #[test]
    fn unknown_channel_reports_line() {
        let text = MINIMAL.replace("Yrotation", "Wrotation");
        let err = parse_bvh(&text).unwrap_err();
        assert_eq!(err.line, 5);
        assert_eq!(err.kind, BvhErrorKind::UnknownChannel("Wrotation".into()));
    }

    #[test]
    fn unbalanced_braces() {
        let text = MINIMAL.replacen("}\nMOTION", "MOTION", 1);
        let err = parse_bvh(&text).unwrap_err();
        assert_eq!(err.kind, BvhErrorKind::UnbalancedBraces);
        let motion = text.lines().position(|l| l == "MOTION").unwrap() + 1;
        assert_eq!(err.line, motion);
        let text = MINIMAL.replacen("}\n", "}\n}\n", 1);
        let err = parse_bvh(&text).unwrap_err();
        assert_eq!(err.kind, BvhErrorKind::UnbalancedBraces);
    }

    #[test]
    fn non_numeric_token() {
        let text = MINIMAL.replace("0 0 0 0 0 0\n", "0 0 zero 0 0 0\n");
        let err = parse_bvh(&text).unwrap_err();
        assert_eq!(err.line, 10);
        assert_eq!(err.kind, BvhErrorKind::InvalidNumber("zero".into()));
    }

    #[test]
    fn zero_frame_time_rejected() {
        let text = MINIMAL.replace("0.0333333", "0");
        assert_eq!(parse_bvh(&text).unwrap_err().kind, BvhErrorKind::FrameTime(0.0));
        let mut doc = parse_bvh(MINIMAL).unwrap();
        doc.frame_time = 0.0;
        assert_eq!(clip_from_bvh(&doc, "x"), Err(ClipError::FrameTime(0.0)));
    }

    #[test]
    fn chain_conversion() {
        let doc = parse_bvh(CHAIN).unwrap();
        assert_eq!(doc.end_sites, vec![EndSite { parent: 1, offset: [0.0, 0.0, 1.0] }]);
        let clip = clip_from_bvh(&doc, "chain").unwrap();
        assert!((clip.frame_rate - 25.0).abs() < 1e-12);
        // frame 0: identity rotations, root translated; pelvis lands at (0, 0.9, 0)
        let p0 = &clip.poses[0];
        assert_eq!(p0.joint(0), Vec3::new(0.0, 0.9, 0.0));
        assert!((p0.joint(1) - Vec3::new(0.0, 0.9, 1.0)).norm() < 1e-12);
        // frame 1: 180 degrees about y flips the chain to -z
        let p1 = &clip.poses[1];
        assert!((p1.joint(1) - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-6);
    }

    #[test]
    fn missing_pelvis_mapping() {
        let text = MINIMAL.replace("Hips", "Thing");
        let doc = parse_bvh(&text).unwrap();
        assert_eq!(clip_from_bvh(&doc, "x"), Err(ClipError::MissingPelvis));
        let roles = RoleMap::default().with_overrides(&BTreeMap::from([(
            ROLE_PELVIS.to_string(),
            "Thing".to_string(),
        )]));
        let doc = parse_bvh_with_roles(&text, &roles).unwrap();
        assert!(clip_from_bvh(&doc, "x").is_ok());
    }

    #[test]
    fn rotation_order_follows_declaration() {
        // Z then X: rotate the +z child by 90 about x first (-> -y), then 90 about z (-> +x)
        let doc = parse_bvh(&CHAIN.replace("0 0 0 0 0 180 0 0 0", "0 0 0 0 0 0 90 90 0")).unwrap();
        let (_, rotations, _) = doc.frame_transforms(1);
        let v = rotations[1] * Vec3::new(0.0, 0.0, 1.0);
        assert!((v - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12, "{v}");
    }

    #[test]
    fn scaling_applies_to_offsets_and_positions() {
        let doc = parse_bvh(CHAIN).unwrap().scaled(0.5);
        assert_eq!(doc.skeleton.joints()[1].offset, [0.0, 0.0, 0.5]);
        assert_eq!(&doc.frames[0][..3], &[2.5, 0.45, 1.0]);
        assert_eq!(doc.frames[1][5], 180.0);
    }
}
