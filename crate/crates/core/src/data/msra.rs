//! MSRA hand gesture layout.
//!
//! ```text
//! <root>/P<subject>/<gesture>/joint.txt
//! <root>/P<subject>/<gesture>/<frame:06>_depth.bin
//! <root>/P<subject>/<gesture>/stretched.txt      (optional)
//! ```
//!
//! A depth file is six little-endian `i32` (image width, image height, bbox
//! left, top, right, bottom; right/bottom exclusive) followed by
//! `(right − left) × (bottom − top)` little-endian `f32` depths in mm, row
//! major, covering the bounding box. Zero means no depth.
//!
//! `joint.txt` holds the frame count on its first line and then one line of
//! 63 numbers (21 joints × xyz) per frame. Stored coordinates are multiplied
//! by `axis_signs` to obtain camera coordinates (x right, y down, z forward).
//!
//! `stretched.txt`, when present, holds one line per frame with one 0/1 flag
//! per finger chain and overrides the gesture lookup table.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DatasetIndex, ImageSource, Sample};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthImage, HandPose, Point3, SkeletonSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsraConfig {
    pub axis_signs: [f64; 3],
    pub intrinsics: CameraIntrinsics,
    /// Gesture directory name → names of the fingers stretched in it.
    pub gesture_stretched: BTreeMap<String, Vec<String>>,
}

impl Default for MsraConfig {
    fn default() -> Self {
        let table: [(&str, &[&str]); 17] = [
            ("1", &["index"]),
            ("2", &["index", "middle"]),
            ("3", &["index", "middle", "ring"]),
            ("4", &["index", "middle", "ring", "little"]),
            ("5", &["thumb", "index", "middle", "ring", "little"]),
            ("6", &["thumb", "little"]),
            ("7", &[]),
            ("8", &["thumb", "index"]),
            ("9", &[]),
            ("I", &["little"]),
            ("IP", &["index", "little"]),
            ("L", &["thumb", "index"]),
            ("MP", &["middle", "ring", "little"]),
            ("RP", &["index", "middle", "little"]),
            ("T", &[]),
            ("TIP", &["middle", "ring", "little"]),
            ("Y", &["thumb", "little"]),
        ];
        MsraConfig {
            axis_signs: [1.0, -1.0, -1.0],
            intrinsics: CameraIntrinsics::default(),
            gesture_stretched: table
                .iter()
                .map(|(g, f)| (g.to_string(), f.iter().map(|s| s.to_string()).collect()))
                .collect(),
        }
    }
}

impl MsraConfig {
    fn flags_for(&self, gesture: &str, skeleton: &SkeletonSpec) -> Option<Vec<bool>> {
        let names = self.gesture_stretched.get(gesture)?;
        Some(skeleton.finger_names.iter().map(|n| names.contains(n)).collect())
    }
}

pub fn read_depth_bin(path: &Path, background: f32) -> Result<DepthImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = |offset: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    if bytes.len() < 24 {
        return Err(format(bytes.len(), format!("header needs 24 bytes, file has {}", bytes.len())));
    }
    let h: Vec<i32> = bytes[..24]
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (w, ht, l, t, r, b) = (h[0], h[1], h[2], h[3], h[4], h[5]);
    if w <= 0 || ht <= 0 || l < 0 || t < 0 || r < l || b < t || r > w || b > ht {
        return Err(format(0, format!("bad header: size {w}x{ht}, bbox ({l},{t})-({r},{b})")));
    }
    let n = ((r - l) as usize) * ((b - t) as usize);
    let expected = 24 + 4 * n;
    if bytes.len() != expected {
        return Err(format(
            24,
            format!("bbox needs {expected} bytes in total, file has {}", bytes.len()),
        ));
    }
    let (w, ht) = (w as usize, ht as usize);
    let mut depths = vec![background; w * ht];
    let bw = (r - l) as usize;
    for (k, c) in bytes[24..].chunks_exact(4).enumerate() {
        let (x, y) = (l as usize + k % bw, t as usize + k / bw);
        depths[y * w + x] = f32::from_le_bytes(c.try_into().unwrap());
    }
    DepthImage::new(w, ht, depths, background)
}

/// Writes `img` cropped to its foreground bounding box; background becomes 0.
pub fn write_depth_bin(path: &Path, img: &DepthImage) -> Result<()> {
    let (mut l, mut t, mut r, mut b) = (img.width(), img.height(), 0usize, 0usize);
    for (p, _) in img.foreground_pixels() {
        l = l.min(p.u as usize);
        t = t.min(p.v as usize);
        r = r.max(p.u as usize + 1);
        b = b.max(p.v as usize + 1);
    }
    if r == 0 {
        (l, t, r, b) = (0, 0, 0, 0);
    }
    let mut out = Vec::with_capacity(24 + 4 * (r - l) * (b - t));
    for x in [img.width(), img.height(), l, t, r, b] {
        out.extend_from_slice(&(x as i32).to_le_bytes());
    }
    let bg = img.background();
    for v in t..b {
        for u in l..r {
            let d = img.depths()[v * img.width() + u];
            out.extend_from_slice(&(if d >= bg { 0.0f32 } else { d }).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_numbers(path: &Path, line_no: usize, line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|s| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("not a number: {s:?}"),
            })
        })
        .collect()
}

/// Parses a joint file into poses in camera coordinates.
pub fn read_joint_file(path: &Path, skeleton: &Arc<SkeletonSpec>, signs: [f64; 3]) -> Result<Vec<HandPose>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty joint file".into()))?;
    let count: usize = first.trim().parse().map_err(|_| parse_err(1, format!("bad frame count {first:?}")))?;
    let per = 3 * skeleton.joint_count;
    let mut poses = Vec::with_capacity(count);
    for (i, line) in lines {
        let v = parse_numbers(path, i + 1, line)?;
        if v.len() != per {
            return Err(parse_err(i + 1, format!("expected {per} numbers, found {}", v.len())));
        }
        let joints = v
            .chunks_exact(3)
            .map(|c| Point3::new(c[0] * signs[0], c[1] * signs[1], c[2] * signs[2]))
            .collect();
        poses.push(HandPose::new(joints, skeleton.clone()).map_err(|e| parse_err(i + 1, e.to_string()))?);
    }
    if poses.len() != count {
        return Err(parse_err(1, format!("header says {count} frames, found {}", poses.len())));
    }
    Ok(poses)
}

pub fn write_joint_file(path: &Path, poses: &[&HandPose], signs: [f64; 3]) -> Result<()> {
    let mut s = format!("{}\n", poses.len());
    for p in poses {
        let row: Vec<String> = p
            .joints
            .iter()
            .flat_map(|j| [j.x * signs[0], j.y * signs[1], j.z * signs[2]])
            .map(|x| format!("{x}"))
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_stretched_file(path: &Path, fingers: usize) -> Result<Vec<Vec<bool>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let flags: Vec<bool> = line
            .split_whitespace()
            .map(|s| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("flag must be 0 or 1, found {s:?}"),
                }),
            })
            .collect::<Result<_>>()?;
        if flags.len() != fingers {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("expected {fingers} flags, found {}", flags.len()),
            });
        }
        out.push(flags);
    }
    Ok(out)
}

fn sorted_dirs(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let e = e.map_err(|e| Error::io(path, e))?;
        if e.path().is_dir() {
            out.push((e.file_name().to_string_lossy().into_owned(), e.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Indexes every `P<n>/<gesture>` directory under `root`. Depth files are
/// checked for existence but only read when an image is loaded.
pub fn load_msra(root: &Path, cfg: &MsraConfig) -> Result<DatasetIndex> {
    let skeleton = Arc::new(SkeletonSpec::msra21());
    let mut index = DatasetIndex::new(skeleton.clone(), cfg.intrinsics, crate::geometry::DEFAULT_BACKGROUND);
    let mut subjects: Vec<(u32, PathBuf)> = Vec::new();
    for (name, path) in sorted_dirs(root)? {
        if let Some(n) = name.strip_prefix('P').and_then(|s| s.parse::<u32>().ok()) {
            subjects.push((n, path));
        }
    }
    if subjects.is_empty() {
        return Err(Error::Data {
            sample: root.display().to_string(),
            reason: "no P<n> subject directories".into(),
        });
    }
    subjects.sort();
    for (subject, spath) in subjects {
        for (gesture, gpath) in sorted_dirs(&spath)? {
            let joint_file = gpath.join("joint.txt");
            if !joint_file.exists() {
                continue;
            }
            let poses = read_joint_file(&joint_file, &skeleton, cfg.axis_signs)?;
            let sidecar = gpath.join("stretched.txt");
            let flags = if sidecar.exists() {
                let f = read_stretched_file(&sidecar, skeleton.finger_chains.len())?;
                if f.len() != poses.len() {
                    return Err(Error::Parse {
                        path: sidecar,
                        line: f.len(),
                        reason: format!("{} flag lines for {} frames", f.len(), poses.len()),
                    });
                }
                f.into_iter().map(Some).collect()
            } else {
                vec![cfg.flags_for(&gesture, &skeleton); poses.len()]
            };
            for (i, (pose, stretched)) in poses.into_iter().zip(flags).enumerate() {
                let file = gpath.join(format!("{i:06}_depth.bin"));
                if !file.exists() {
                    return Err(Error::Data {
                        sample: file.display().to_string(),
                        reason: "depth file listed in joint.txt is missing".into(),
                    });
                }
                index.samples.push(Sample {
                    id: format!("P{subject}_{gesture}_{i:06}"),
                    source: ImageSource::MsraBin(file),
                    pose,
                    subject,
                    gesture: gesture.clone(),
                    stretched,
                });
            }
        }
    }
    Ok(index)
}

/// Writes `index` in the MSRA layout. Samples are grouped by subject and
/// gesture in index order; stretched flags go to `stretched.txt` sidecars.
pub fn write_msra(index: &DatasetIndex, root: &Path, cfg: &MsraConfig) -> Result<()> {
    let mut groups: BTreeMap<(u32, String), Vec<usize>> = BTreeMap::new();
    for (i, s) in index.samples.iter().enumerate() {
        groups.entry((s.subject, s.gesture.clone())).or_default().push(i);
    }
    for ((subject, gesture), members) in groups {
        let dir = root.join(format!("P{subject}")).join(if gesture.is_empty() { "0" } else { &gesture });
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let poses: Vec<&HandPose> = members.iter().map(|&i| &index.samples[i].pose).collect();
        write_joint_file(&dir.join("joint.txt"), &poses, cfg.axis_signs)?;
        for (k, &i) in members.iter().enumerate() {
            let img = index.load_image(i)?;
            write_depth_bin(&dir.join(format!("{k:06}_depth.bin")), &img)?;
        }
        if members.iter().all(|&i| index.samples[i].stretched.is_some()) {
            let mut s = String::new();
            for &i in &members {
                let f = index.samples[i].stretched.as_ref().unwrap();
                let row: Vec<&str> = f.iter().map(|&b| if b { "1" } else { "0" }).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
            let p = dir.join("stretched.txt");
            fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}
