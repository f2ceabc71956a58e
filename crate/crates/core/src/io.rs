//! JSON file formats for characters, motions, sensors, DMI fields and
//! reports.
//!
//! Floats are written in shortest round-trip form, so `load(save(x))`
//! reproduces every numeric payload bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::character::{BodyPart, CharacterParts, SkinnedCharacter};
use crate::dmi::{DmiEntry, DmiField};
use crate::error::IoError;
use crate::motion::{MotionSequence, QUAT_NORM_TOL};
use crate::rotation::{quat_from_wxyz, quat_to_wxyz};
use crate::scs::{SemanticCoordinate, SensorFeature, SensorSet};
use crate::synthetic::SyntheticSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Quaternions further than this from unit norm are renormalized with a
/// warning; smaller excesses over the motion tolerance are fixed silently.
pub const QUAT_WARN_TOL: f64 = 1e-4;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_json(path, &text)
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse {
        path: path.to_owned(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<(), IoError> {
    let mut text = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }
    .map_err(|e| IoError::Invalid {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

fn check_version(path: &Path, found: u32) -> Result<(), IoError> {
    if found != SCHEMA_VERSION {
        return Err(IoError::SchemaVersion {
            path: path.to_owned(),
            found,
        });
    }
    Ok(())
}

fn invalid(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Invalid {
        path: path.to_owned(),
        message: message.into(),
    }
}

fn to_vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn from_vec3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CharacterFile {
    schema_version: u32,
    units: String,
    name: String,
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    joints: Vec<[f64; 3]>,
    /// `-1` marks the root.
    parents: Vec<i64>,
    joint_names: Vec<String>,
    skin_weights: Vec<Vec<(usize, f64)>>,
    forward: [f64; 3],
    /// Joint name to body part.
    body_parts: BTreeMap<String, BodyPart>,
}

pub fn character_to_string(character: &SkinnedCharacter) -> String {
    serde_json::to_string_pretty(&character_file(character)).expect("character serializes")
}

fn character_file(character: &SkinnedCharacter) -> CharacterFile {
    let p = character.parts();
    CharacterFile {
        schema_version: SCHEMA_VERSION,
        units: "meters".into(),
        name: p.name.clone(),
        vertices: p.vertices.iter().map(from_vec3).collect(),
        faces: p.faces.clone(),
        joints: p.joints.iter().map(from_vec3).collect(),
        parents: p.parents.iter().map(|q| q.map_or(-1, |i| i as i64)).collect(),
        joint_names: p.joint_names.clone(),
        skin_weights: p.skin_weights.clone(),
        forward: from_vec3(&p.forward),
        body_parts: p.joint_names.iter().cloned().zip(p.body_parts.iter().copied()).collect(),
    }
}

pub fn save_character(path: &Path, character: &SkinnedCharacter) -> Result<(), IoError> {
    write_json(path, &character_file(character), true)
}

pub fn load_character(path: &Path) -> Result<SkinnedCharacter, IoError> {
    let f: CharacterFile = read_json(path)?;
    character_from_file(path, f)
}

pub fn parse_character(path: &Path, text: &str) -> Result<SkinnedCharacter, IoError> {
    character_from_file(path, parse_json(path, text)?)
}

fn character_from_file(path: &Path, f: CharacterFile) -> Result<SkinnedCharacter, IoError> {
    check_version(path, f.schema_version)?;
    if f.units != "meters" {
        return Err(invalid(path, format!("units must be \"meters\", got {:?}", f.units)));
    }
    let parents = f
        .parents
        .iter()
        .enumerate()
        .map(|(j, &p)| match p {
            -1 => Ok(None),
            p if p >= 0 => Ok(Some(p as usize)),
            p => Err(invalid(path, format!("joint {j} has parent {p}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let body_parts = f
        .joint_names
        .iter()
        .map(|n| {
            f.body_parts
                .get(n)
                .copied()
                .ok_or_else(|| invalid(path, format!("joint {n:?} has no body part")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(extra) = f.body_parts.keys().find(|k| !f.joint_names.contains(k)) {
        return Err(invalid(path, format!("body part given for unknown joint {extra:?}")));
    }
    let parts = CharacterParts {
        name: f.name,
        vertices: f.vertices.into_iter().map(to_vec3).collect(),
        faces: f.faces,
        joints: f.joints.into_iter().map(to_vec3).collect(),
        parents,
        joint_names: f.joint_names,
        skin_weights: f.skin_weights,
        forward: to_vec3(f.forward),
        body_parts,
    };
    SkinnedCharacter::new(parts).map_err(|source| IoError::Character {
        path: path.to_owned(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionFile {
    schema_version: u32,
    fps: f64,
    joint_names: Vec<String>,
    root_translation: Vec<[f64; 3]>,
    /// `[frame][joint]` as `[w, x, y, z]`.
    rotations: Vec<Vec<[f64; 4]>>,
}

/// A motion with the joint names it was authored for.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMotion {
    pub motion: MotionSequence,
    pub joint_names: Vec<String>,
}

impl NamedMotion {
    /// Checks the joint names against `character`.
    pub fn bind(self, character: &SkinnedCharacter) -> Result<MotionSequence, String> {
        if self.joint_names != character.joint_names() {
            return Err(format!(
                "motion joints {:?} do not match character {} joints {:?}",
                self.joint_names,
                character.name(),
                character.joint_names()
            ));
        }
        Ok(self.motion)
    }
}

pub fn save_motion(path: &Path, motion: &MotionSequence, joint_names: &[String]) -> Result<(), IoError> {
    if joint_names.len() != motion.joint_count() {
        return Err(invalid(path, "joint name count differs from motion joint count"));
    }
    let f = MotionFile {
        schema_version: SCHEMA_VERSION,
        fps: motion.fps(),
        joint_names: joint_names.to_vec(),
        root_translation: motion.root_translation().iter().map(from_vec3).collect(),
        rotations: motion
            .rotations()
            .iter()
            .map(|fr| fr.iter().map(quat_to_wxyz).collect())
            .collect(),
    };
    write_json(path, &f, true)
}

pub fn load_motion(path: &Path) -> Result<NamedMotion, IoError> {
    let f: MotionFile = read_json(path)?;
    check_version(path, f.schema_version)?;
    if f.rotations.iter().any(|fr| fr.len() != f.joint_names.len()) {
        return Err(invalid(path, "rotation count per frame differs from joint name count"));
    }
    let mut rotations = Vec::with_capacity(f.rotations.len());
    for (t, frame) in f.rotations.iter().enumerate() {
        let mut out = Vec::with_capacity(frame.len());
        for (j, q) in frame.iter().enumerate() {
            let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(invalid(path, format!("frame {t} joint {j}: quaternion norm {norm}")));
            }
            let dev = (norm - 1.0).abs();
            if dev > QUAT_WARN_TOL {
                warn!("{}: frame {t} joint {j}: quaternion norm {norm}, renormalizing", path.display());
            }
            out.push(if dev > QUAT_NORM_TOL {
                UnitQuaternion::new_normalize(quat_from_wxyz(*q).into_inner())
            } else {
                quat_from_wxyz(*q)
            });
        }
        rotations.push(out);
    }
    let motion = MotionSequence::new(f.fps, f.root_translation.into_iter().map(to_vec3).collect(), rotations)
        .map_err(|source| IoError::Motion {
            path: path.to_owned(),
            source,
        })?;
    Ok(NamedMotion {
        motion,
        joint_names: f.joint_names,
    })
}

/// Loads a motion and checks it against `character`.
pub fn load_bound_motion(path: &Path, character: &SkinnedCharacter) -> Result<MotionSequence, IoError> {
    load_motion(path)?.bind(character).map_err(|m| invalid(path, m))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoordinateRecord {
    b: usize,
    l: f64,
    phi: f64,
}

impl From<SemanticCoordinate> for CoordinateRecord {
    fn from(c: SemanticCoordinate) -> Self {
        CoordinateRecord {
            b: c.bone,
            l: c.l,
            phi: c.phi,
        }
    }
}

impl From<CoordinateRecord> for SemanticCoordinate {
    fn from(c: CoordinateRecord) -> Self {
        SemanticCoordinate::new(c.b, c.l, c.phi)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorRecord {
    b: usize,
    l: f64,
    phi: f64,
    valid: bool,
    position: [f64; 3],
    /// Row-major.
    tangent: [f64; 9],
    skin_weights: Vec<(usize, f64)>,
    body_part: BodyPart,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorFile {
    schema_version: u32,
    character: String,
    sensors: Vec<SensorRecord>,
}

pub fn save_sensors(path: &Path, character_name: &str, sensors: &SensorSet) -> Result<(), IoError> {
    let records = sensors
        .features
        .iter()
        .zip(&sensors.body_parts)
        .map(|(f, &body_part)| {
            let t = &f.tangent;
            SensorRecord {
                b: f.coordinate.bone,
                l: f.coordinate.l,
                phi: f.coordinate.phi,
                valid: f.valid,
                position: from_vec3(&f.position),
                tangent: [
                    t[(0, 0)],
                    t[(0, 1)],
                    t[(0, 2)],
                    t[(1, 0)],
                    t[(1, 1)],
                    t[(1, 2)],
                    t[(2, 0)],
                    t[(2, 1)],
                    t[(2, 2)],
                ],
                skin_weights: f.skin_weights.clone(),
                body_part,
            }
        })
        .collect();
    write_json(
        path,
        &SensorFile {
            schema_version: SCHEMA_VERSION,
            character: character_name.to_owned(),
            sensors: records,
        },
        true,
    )
}

/// Returns the sensors and the name of the character they were derived on.
pub fn load_sensors(path: &Path) -> Result<(SensorSet, String), IoError> {
    let f: SensorFile = read_json(path)?;
    check_version(path, f.schema_version)?;
    let mut set = SensorSet {
        features: Vec::with_capacity(f.sensors.len()),
        body_parts: Vec::with_capacity(f.sensors.len()),
    };
    for r in f.sensors {
        set.features.push(SensorFeature {
            coordinate: SemanticCoordinate::new(r.b, r.l, r.phi),
            valid: r.valid,
            position: to_vec3(r.position),
            tangent: Matrix3::from_row_slice(&r.tangent),
            skin_weights: r.skin_weights,
        });
        set.body_parts.push(r.body_part);
    }
    Ok((set, f.character))
}

/// `(t, k, j, c, dx, dy, dz)`
type EntryRecord = (usize, usize, usize, u8, f64, f64, f64);

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DmiFile {
    schema_version: u32,
    pairs: usize,
    frames: usize,
    coordinates: Vec<CoordinateRecord>,
    entries: Vec<EntryRecord>,
}

pub fn save_dmi_field(path: &Path, field: &DmiField) -> Result<(), IoError> {
    let entries = field
        .frames
        .iter()
        .enumerate()
        .flat_map(|(t, es)| {
            es.iter()
                .map(move |e| (t, e.observer, e.target, u8::from(e.valid), e.d.x, e.d.y, e.d.z))
        })
        .collect();
    let f = DmiFile {
        schema_version: SCHEMA_VERSION,
        pairs: field.pairs,
        frames: field.frame_count(),
        coordinates: field.coordinates.iter().map(|&c| c.into()).collect(),
        entries,
    };
    write_json(path, &f, false)
}

pub fn load_dmi_field(path: &Path) -> Result<DmiField, IoError> {
    let f: DmiFile = read_json(path)?;
    check_version(path, f.schema_version)?;
    let sensors = f.coordinates.len();
    let mut frames = vec![Vec::new(); f.frames];
    for (n, &(t, k, j, c, dx, dy, dz)) in f.entries.iter().enumerate() {
        if t >= f.frames || k >= sensors || j >= sensors || c > 1 {
            return Err(invalid(path, format!("entry {n} is out of range")));
        }
        frames[t].push(DmiEntry {
            observer: k,
            target: j,
            d: Vector3::new(dx, dy, dz),
            valid: c == 1,
        });
    }
    Ok(DmiField {
        pairs: f.pairs,
        coordinates: f.coordinates.into_iter().map(Into::into).collect(),
        frames,
    })
}

pub fn load_synthetic_spec(path: &Path) -> Result<SyntheticSpec, IoError> {
    read_json(path)
}

/// Writes any serializable report as pretty JSON.
pub fn save_report<T: Serialize>(path: &Path, report: &T) -> Result<(), IoError> {
    write_json(path, report, true)
}
