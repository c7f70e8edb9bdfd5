//! Error metrics, reports and overlay images.
//!
//! All errors are mean 3D Euclidean distances in mm between predicted and
//! ground-truth joints. Means are accumulated in sample order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, DepthImage, HandPose, SkeletonSpec};

/// Means restricted to fingers flagged as stretched out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchedErrors {
    /// Number of (sample, finger) pairs flagged stretched.
    pub finger_count: usize,
    pub finger_error: f64,
    pub tip_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub skeleton: String,
    pub sample_count: usize,
    pub joint_errors: Vec<f64>,
    pub mean_error: f64,
    pub finger_names: Vec<String>,
    /// Mean over each finger chain's joints.
    pub finger_errors: Vec<f64>,
    pub all_fingers_error: f64,
    pub tip_errors: Vec<f64>,
    pub all_tips_error: f64,
    /// `None` when no sample has a stretched finger (or no flags at all).
    pub stretched: Option<StretchedErrors>,
}

fn check_pairs(preds: &[HandPose], truths: &[HandPose]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::invalid(
            "evaluation",
            format!("{} predictions for {} ground truths", preds.len(), truths.len()),
        ));
    }
    if preds.is_empty() {
        return Err(Error::invalid("evaluation", "no samples"));
    }
    let sk = &truths[0].skeleton;
    for (p, t) in preds.iter().zip(truths) {
        for pose in [p, t] {
            if pose.skeleton != *sk {
                return Err(Error::SkeletonMismatch {
                    expected: sk.joint_count,
                    found: pose.joint_count(),
                });
            }
        }
    }
    Ok(())
}

/// Per-joint mean error and the mean over all joints.
pub fn mean_joint_error(preds: &[HandPose], truths: &[HandPose]) -> Result<(Vec<f64>, f64)> {
    check_pairs(preds, truths)?;
    let n = truths[0].joint_count();
    let mut sums = vec![0.0; n];
    for (p, t) in preds.iter().zip(truths) {
        for (s, (a, b)) in sums.iter_mut().zip(p.joints.iter().zip(&t.joints)) {
            *s += (a - b).norm();
        }
    }
    let per: Vec<f64> = sums.iter().map(|s| s / preds.len() as f64).collect();
    let mean = per.iter().sum::<f64>() / n as f64;
    Ok((per, mean))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FingerErrors {
    pub per_finger: Vec<f64>,
    pub all_fingers: f64,
    pub per_tip: Vec<f64>,
    pub all_tips: f64,
}

fn mean_of(per_joint: &[f64], joints: &[usize]) -> f64 {
    joints.iter().map(|&j| per_joint[j]).sum::<f64>() / joints.len() as f64
}

pub fn finger_and_tip_errors(preds: &[HandPose], truths: &[HandPose]) -> Result<FingerErrors> {
    let (per_joint, _) = mean_joint_error(preds, truths)?;
    let sk = &truths[0].skeleton;
    let per_finger: Vec<f64> = sk.finger_chains.iter().map(|c| mean_of(&per_joint, c)).collect();
    let all: Vec<usize> = sk.finger_chains.iter().flatten().copied().collect();
    let tips = sk.fingertips();
    Ok(FingerErrors {
        all_fingers: mean_of(&per_joint, &all),
        per_tip: tips.iter().map(|&t| per_joint[t]).collect(),
        all_tips: mean_of(&per_joint, &tips),
        per_finger,
    })
}

/// Means over the joints (and tips) of stretched fingers only. Samples with
/// no flags contribute nothing.
pub fn stretched_errors(
    preds: &[HandPose],
    truths: &[HandPose],
    flags: &[Option<Vec<bool>>],
) -> Result<Option<StretchedErrors>> {
    check_pairs(preds, truths)?;
    if flags.len() != truths.len() {
        return Err(Error::invalid("evaluation", "one flag entry per sample required"));
    }
    let sk = &truths[0].skeleton;
    let (mut joint_sum, mut joint_n, mut tip_sum, mut fingers) = (0.0, 0usize, 0.0, 0usize);
    for ((p, t), f) in preds.iter().zip(truths).zip(flags) {
        let Some(f) = f else { continue };
        if f.len() != sk.finger_chains.len() {
            return Err(Error::invalid("evaluation", "stretched flags do not match finger count"));
        }
        for (chain, _) in sk.finger_chains.iter().zip(f).filter(|(_, &on)| on) {
            for &j in chain {
                joint_sum += (p.joints[j] - t.joints[j]).norm();
                joint_n += 1;
            }
            let tip = *chain.last().unwrap();
            tip_sum += (p.joints[tip] - t.joints[tip]).norm();
            fingers += 1;
        }
    }
    if fingers == 0 {
        return Ok(None);
    }
    Ok(Some(StretchedErrors {
        finger_count: fingers,
        finger_error: joint_sum / joint_n as f64,
        tip_error: tip_sum / fingers as f64,
    }))
}

pub fn evaluate(method: &str, preds: &[HandPose], truths: &[HandPose], flags: &[Option<Vec<bool>>]) -> Result<EvalReport> {
    let (joint_errors, mean_error) = mean_joint_error(preds, truths)?;
    let f = finger_and_tip_errors(preds, truths)?;
    let sk = &truths[0].skeleton;
    Ok(EvalReport {
        method: method.to_string(),
        skeleton: sk.name.clone(),
        sample_count: preds.len(),
        joint_errors,
        mean_error,
        finger_names: sk.finger_names.clone(),
        finger_errors: f.per_finger,
        all_fingers_error: f.all_fingers,
        tip_errors: f.per_tip,
        all_tips_error: f.all_tips,
        stretched: stretched_errors(preds, truths, flags)?,
    })
}

/// One CSV row. `index` is the joint or finger index, empty for aggregates;
/// `error_mm` is empty for an empty subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub metric: String,
    pub index: Option<usize>,
    pub name: String,
    pub error_mm: Option<f64>,
    pub count: usize,
}

pub const CSV_COLUMNS: [&str; 6] = ["method", "metric", "index", "name", "error_mm", "count"];

impl EvalReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let row = |metric: &str, index: Option<usize>, name: String, error_mm: Option<f64>, count: usize| CsvRow {
            method: self.method.clone(),
            metric: metric.into(),
            index,
            name,
            error_mm,
            count,
        };
        let n = self.sample_count;
        let mut rows = vec![row("mean", None, "all joints".into(), Some(self.mean_error), n)];
        for (j, e) in self.joint_errors.iter().enumerate() {
            rows.push(row("joint", Some(j), format!("joint {j}"), Some(*e), n));
        }
        for (f, e) in self.finger_errors.iter().enumerate() {
            rows.push(row("finger", Some(f), self.finger_names[f].clone(), Some(*e), n));
        }
        rows.push(row("all_fingers", None, "all fingers".into(), Some(self.all_fingers_error), n));
        for (f, e) in self.tip_errors.iter().enumerate() {
            rows.push(row("tip", Some(f), self.finger_names[f].clone(), Some(*e), n));
        }
        rows.push(row("all_tips", None, "all fingertips".into(), Some(self.all_tips_error), n));
        let (c, fe, te) = match &self.stretched {
            Some(s) => (s.finger_count, Some(s.finger_error), Some(s.tip_error)),
            None => (0, None, None),
        };
        rows.push(row("stretched_fingers", None, "stretched fingers".into(), fe, c));
        rows.push(row("stretched_tips", None, "stretched fingertips".into(), te, c));
        rows
    }

    /// Rebuilds a report from its CSV rows.
    pub fn from_csv_rows(rows: &[CsvRow], skeleton: &SkeletonSpec) -> Result<EvalReport> {
        let bad = |r: &str| Error::invalid("report csv", r.to_string());
        let first = rows.first().ok_or_else(|| bad("no rows"))?;
        let mut rep = EvalReport {
            method: first.method.clone(),
            skeleton: skeleton.name.clone(),
            sample_count: first.count,
            joint_errors: vec![f64::NAN; skeleton.joint_count],
            mean_error: f64::NAN,
            finger_names: skeleton.finger_names.clone(),
            finger_errors: vec![f64::NAN; skeleton.finger_chains.len()],
            all_fingers_error: f64::NAN,
            tip_errors: vec![f64::NAN; skeleton.finger_chains.len()],
            all_tips_error: f64::NAN,
            stretched: None,
        };
        let mut st = (0usize, None, None);
        for r in rows {
            let slot = |v: &mut Vec<f64>| -> Result<()> {
                let i = r.index.ok_or_else(|| bad("missing index"))?;
                *v.get_mut(i).ok_or_else(|| bad("index out of range"))? = r.error_mm.ok_or_else(|| bad("missing error"))?;
                Ok(())
            };
            match r.metric.as_str() {
                "mean" => rep.mean_error = r.error_mm.ok_or_else(|| bad("missing error"))?,
                "joint" => slot(&mut rep.joint_errors)?,
                "finger" => slot(&mut rep.finger_errors)?,
                "tip" => slot(&mut rep.tip_errors)?,
                "all_fingers" => rep.all_fingers_error = r.error_mm.ok_or_else(|| bad("missing error"))?,
                "all_tips" => rep.all_tips_error = r.error_mm.ok_or_else(|| bad("missing error"))?,
                "stretched_fingers" => st = (r.count, r.error_mm, st.2),
                "stretched_tips" => st = (r.count, st.1, r.error_mm),
                other => return Err(bad(&format!("unknown metric {other:?}"))),
            }
        }
        if let (c, Some(finger_error), Some(tip_error)) = st {
            rep.stretched = Some(StretchedErrors {
                finger_count: c,
                finger_error,
                tip_error,
            });
        }
        Ok(rep)
    }
}

pub fn write_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in reports {
        for row in r.csv_rows() {
            w.serialize(row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: e.to_string(),
    }
}

pub fn write_json(reports: &[EvalReport], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(reports)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// JSON schema of the array written by [`write_json`].
pub const REPORT_SCHEMA: &str = include_str!("../schemas/eval_report.schema.json");

/// Side-by-side table of the finger metrics, one column per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<24}", "error (mm)");
    for r in reports {
        let _ = write!(s, "{:>14}", r.method);
    }
    s.push('\n');
    let mut line = |label: &str, f: &dyn Fn(&EvalReport) -> Option<f64>| {
        let _ = write!(s, "{label:<24}");
        for r in reports {
            match f(r) {
                Some(v) => {
                    let _ = write!(s, "{v:>14.2}");
                }
                None => {
                    let _ = write!(s, "{:>14}", "n/a");
                }
            }
        }
        s.push('\n');
    };
    line("all joints", &|r| Some(r.mean_error));
    line("all fingers", &|r| Some(r.all_fingers_error));
    line("all fingertips", &|r| Some(r.all_tips_error));
    line("stretched fingers", &|r| r.stretched.as_ref().map(|x| x.finger_error));
    line("stretched fingertips", &|r| r.stretched.as_ref().map(|x| x.tip_error));
    if let Some(first) = reports.first() {
        for (f, name) in first.finger_names.iter().enumerate() {
            line(&format!("{name} tip"), &|r| r.tip_errors.get(f).copied());
        }
        if reports.iter().all(|r| r.stretched.is_none()) {
            s.push_str("(no stretched fingers in the evaluated set)\n");
        }
    }
    s
}

const MARKER: Rgb<u8> = Rgb([255, 40, 40]);
const BONE: Rgb<u8> = Rgb([40, 200, 255]);

/// Depth image in gray (near is bright) with the pose's bones and joints
/// drawn on top. Joint markers are 3×3 squares centered on the rounded
/// projection.
pub fn render_overlay(img: &DepthImage, pose: &HandPose, intr: &CameraIntrinsics) -> RgbImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let (lo, hi) = img
        .foreground_pixels()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), (_, d)| (lo.min(d), hi.max(d)));
    let mut out = RgbImage::new(w, h);
    for (p, d) in img.foreground_pixels() {
        let t = if hi > lo { (d - lo) / (hi - lo) } else { 0.0 };
        let g = (230.0 - 170.0 * t) as u8;
        out.put_pixel(p.u as u32, p.v as u32, Rgb([g, g, g]));
    }
    let px: Vec<Option<(f64, f64)>> = pose
        .joints
        .iter()
        .map(|j| project(j, intr).ok().map(|q| (q.u, q.v)))
        .collect();
    let put = |out: &mut RgbImage, u: i64, v: i64, c: Rgb<u8>| {
        if u >= 0 && v >= 0 && (u as u32) < w && (v as u32) < h {
            out.put_pixel(u as u32, v as u32, c);
        }
    };
    let sk = &pose.skeleton;
    let mut bones: Vec<(usize, usize)> = Vec::new();
    for chain in &sk.finger_chains {
        bones.push((sk.wrist(), chain[0]));
        bones.extend(chain.windows(2).map(|w| (w[0], w[1])));
    }
    for (a, b) in bones {
        if let (Some(pa), Some(pb)) = (px[a], px[b]) {
            let steps = ((pb.0 - pa.0).abs().max((pb.1 - pa.1).abs()).ceil() as usize).clamp(1, 4096);
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let u = (pa.0 + t * (pb.0 - pa.0)).round() as i64;
                let v = (pa.1 + t * (pb.1 - pa.1)).round() as i64;
                put(&mut out, u, v, BONE);
            }
        }
    }
    for q in px.iter().flatten() {
        let (u, v) = (q.0.round() as i64, q.1.round() as i64);
        for dv in -1..=1 {
            for du in -1..=1 {
                put(&mut out, u + du, v + dv, MARKER);
            }
        }
    }
    out
}

/// Writes `<dir>/<sample_id>_<method>.png`.
pub fn write_overlay(
    dir: &Path,
    sample_id: &str,
    method: &str,
    img: &DepthImage,
    pose: &HandPose,
    intr: &CameraIntrinsics,
) -> Result<std::path::PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{sample_id}_{method}.png"));
    render_overlay(img, pose, intr).save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, Vector3, DEFAULT_BACKGROUND};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::Value;
    use std::sync::Arc;

    fn random_poses(seed: u64, n: usize, sk: &Arc<SkeletonSpec>) -> Vec<HandPose> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let j = (0..sk.joint_count)
                    .map(|_| Point3::new(rng.gen_range(-80.0..80.0), rng.gen_range(-80.0..80.0), rng.gen_range(200.0..400.0)))
                    .collect();
                HandPose::new(j, sk.clone()).unwrap()
            })
            .collect()
    }

    #[test]
    fn trivial_cases() {
        let sk = Arc::new(SkeletonSpec::msra21());
        let gt = random_poses(1, 5, &sk);
        let (per, mean) = mean_joint_error(&gt, &gt).unwrap();
        assert!(per.iter().all(|&e| e == 0.0) && mean == 0.0);
        let f = finger_and_tip_errors(&gt, &gt).unwrap();
        assert_eq!(f.all_tips, 0.0);

        let mut pred = gt.clone();
        pred[0].joints[7] += Vector3::new(3.0, 4.0, 0.0);
        let (per, _) = mean_joint_error(&pred[..1], &gt[..1]).unwrap();
        assert!((per[7] - 5.0).abs() < 1e-12);

        let icvl = Arc::new(SkeletonSpec::icvl16());
        let other = random_poses(2, 5, &icvl);
        assert!(matches!(mean_joint_error(&other, &gt), Err(Error::SkeletonMismatch { .. })));
    }

    #[test]
    fn matches_single_loop_recomputation() {
        let sk = Arc::new(SkeletonSpec::msra21());
        let gt = random_poses(3, 200, &sk);
        let pred = random_poses(4, 200, &sk);
        let (per, mean) = mean_joint_error(&pred, &gt).unwrap();
        let mut total = 0.0;
        for j in 0..21 {
            let mut s = 0.0;
            for i in 0..200 {
                let d = pred[i].joints[j] - gt[i].joints[j];
                s += (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
            }
            assert!((per[j] - s / 200.0).abs() < 1e-9);
            total += s;
        }
        assert!((mean - total / (200.0 * 21.0)).abs() < 1e-9);

        let f = finger_and_tip_errors(&pred, &gt).unwrap();
        for (k, &tip) in sk.fingertips().iter().enumerate() {
            assert_eq!(f.per_tip[k], per[tip]);
        }
    }

    #[test]
    fn stretched_subsets() {
        let sk = Arc::new(SkeletonSpec::msra21());
        let gt = random_poses(5, 30, &sk);
        let pred = random_poses(6, 30, &sk);
        let all = vec![Some(vec![true; 5]); 30];
        let s = stretched_errors(&pred, &gt, &all).unwrap().unwrap();
        let f = finger_and_tip_errors(&pred, &gt).unwrap();
        assert!((s.tip_error - f.all_tips).abs() < 1e-9);
        assert!((s.finger_error - f.all_fingers).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let flags: Vec<Option<Vec<bool>>> = (0..30).map(|_| Some((0..5).map(|_| rng.gen_bool(0.4)).collect())).collect();
        let s = stretched_errors(&pred, &gt, &flags).unwrap().unwrap();
        let mut tips = Vec::new();
        for i in 0..30 {
            for f in 0..5 {
                if flags[i].as_ref().unwrap()[f] {
                    let t = sk.fingertip(f);
                    tips.push((pred[i].joints[t] - gt[i].joints[t]).norm());
                }
            }
        }
        assert_eq!(s.finger_count, tips.len());
        assert!((s.tip_error - tips.iter().sum::<f64>() / tips.len() as f64).abs() < 1e-9);

        let none = vec![Some(vec![false; 5]); 30];
        assert_eq!(stretched_errors(&pred, &gt, &none).unwrap(), None);
        let rep = evaluate("m", &pred, &gt, &none).unwrap();
        assert!(format_table(&[rep]).contains("n/a"));
    }

    proptest! {
        #[test]
        fn zero_error_sample_never_raises_means(seed in 0u64..1000, n in 1usize..20) {
            let sk = Arc::new(SkeletonSpec::icvl16());
            let gt = random_poses(seed, n, &sk);
            let pred = random_poses(seed + 1, n, &sk);
            let a = finger_and_tip_errors(&pred, &gt).unwrap();
            let (pa, ma) = mean_joint_error(&pred, &gt).unwrap();
            let mut gt2 = gt.clone();
            let mut pred2 = pred.clone();
            gt2.push(gt[0].clone());
            pred2.push(gt[0].clone());
            let b = finger_and_tip_errors(&pred2, &gt2).unwrap();
            let (pb, mb) = mean_joint_error(&pred2, &gt2).unwrap();
            prop_assert!(mb <= ma + 1e-12);
            prop_assert!(b.all_tips <= a.all_tips + 1e-12);
            for (x, y) in pb.iter().zip(&pa) {
                prop_assert!(x <= &(y + 1e-12));
            }
            // subset law: finger means are joint means restricted to chains
            for (f, chain) in sk.finger_chains.iter().enumerate() {
                let m = chain.iter().map(|&j| pa[j]).sum::<f64>() / chain.len() as f64;
                prop_assert!((a.per_finger[f] - m).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let sk = Arc::new(SkeletonSpec::msra21());
        let gt = random_poses(8, 10, &sk);
        let pred = random_poses(9, 10, &sk);
        let flags = vec![Some(vec![true, false, true, false, false]); 10];
        let rep = evaluate("baseline", &pred, &gt, &flags).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&[rep.clone()], &path).unwrap();
        let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, CSV_COLUMNS.join(","));
        let back = EvalReport::from_csv_rows(&read_csv(&path).unwrap(), &sk).unwrap();
        assert_eq!(back.joint_errors.len(), rep.joint_errors.len());
        for (a, b) in back.joint_errors.iter().zip(&rep.joint_errors) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((back.all_tips_error - rep.all_tips_error).abs() < 1e-9);
        let (s, t) = (back.stretched.unwrap(), rep.stretched.unwrap());
        assert!((s.tip_error - t.tip_error).abs() < 1e-9);
        assert_eq!(s.finger_count, t.finger_count);
    }

    /// Checks `v` against the subset of JSON schema used by the shipped file.
    fn conforms(v: &Value, schema: &Value, root: &Value) -> bool {
        if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
            let name = r.trim_start_matches("#/definitions/");
            return conforms(v, &root["definitions"][name], root);
        }
        if let Some(any) = schema.get("anyOf").and_then(Value::as_array) {
            return any.iter().any(|s| conforms(v, s, root));
        }
        let ok_type = match schema.get("type").and_then(Value::as_str) {
            Some("object") => v.is_object(),
            Some("array") => v.is_array(),
            Some("number") => v.is_number(),
            Some("integer") => v.is_u64() || v.is_i64(),
            Some("string") => v.is_string(),
            Some("null") => v.is_null(),
            _ => true,
        };
        if !ok_type {
            return false;
        }
        if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
            if v.as_f64().map_or(false, |x| x < min) {
                return false;
            }
        }
        if let Some(req) = schema.get("required").and_then(Value::as_array) {
            if !req.iter().all(|k| v.get(k.as_str().unwrap()).is_some()) {
                return false;
            }
        }
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            for (k, s) in props {
                if let Some(x) = v.get(k) {
                    if !conforms(x, s, root) {
                        return false;
                    }
                }
            }
            if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
                if !v.as_object().unwrap().keys().all(|k| props.contains_key(k)) {
                    return false;
                }
            }
        }
        if let Some(items) = schema.get("items") {
            if !v.as_array().unwrap().iter().all(|x| conforms(x, items, root)) {
                return false;
            }
        }
        true
    }

    #[test]
    fn json_matches_schema() {
        let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
        let sk = Arc::new(SkeletonSpec::msra21());
        let gt = random_poses(10, 4, &sk);
        let pred = random_poses(11, 4, &sk);
        let with = evaluate("a", &pred, &gt, &vec![Some(vec![true; 5]); 4]).unwrap();
        let without = evaluate("b", &pred, &gt, &vec![None; 4]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_json(&[with, without], &path).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(conforms(&v, &schema, &schema));
        let mut broken = v.clone();
        broken[0]["mean_error"] = Value::String("x".into());
        assert!(!conforms(&broken, &schema, &schema));
    }

    #[test]
    fn overlay_markers_on_projections() {
        let sk = Arc::new(SkeletonSpec::msra21());
        let intr = CameraIntrinsics::default();
        let hand = crate::data::synth::SynthConfig::default().sample_hand(&sk, 3, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_overlay(dir.path(), "synth_000000", "refined", &hand.image, &hand.pose, &intr).unwrap();
        assert!(path.ends_with("synth_000000_refined.png"));
        let back = image::open(&path).unwrap().into_rgb8();
        for j in &hand.pose.joints {
            let q = project(j, &intr).unwrap();
            let (u, v) = (q.u.round() as u32, q.v.round() as u32);
            assert_eq!(*back.get_pixel(u, v), MARKER);
        }
        let empty = DepthImage::filled(8, 8, DEFAULT_BACKGROUND);
        let _ = render_overlay(&empty, &hand.pose, &intr);
    }
}
