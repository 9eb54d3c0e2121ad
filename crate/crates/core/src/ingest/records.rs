//! Whitespace-separated text records: detections and keypoints.
//!
//! Blank lines and lines starting with `#` are skipped. Line numbers in
//! errors are 1-based.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{BBox, Detection, Joint, Keypoints};
use crate::error::{Error, Result};

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split_whitespace().collect()))
        }
    })
}

fn field<T: FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("{name}: cannot parse {raw:?}"),
    })
}

/// Parses `frame_index x0 y0 x1 y1 score` lines. Output is stably sorted by
/// frame index.
pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (line, fields) in records(text) {
        if fields.len() != 6 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let frame_index: u32 = field(path, line, "frame_index", fields[0])?;
        let mut c = [0i32; 4];
        for (k, name) in ["x0", "y0", "x1", "y1"].iter().enumerate() {
            c[k] = field(path, line, name, fields[k + 1])?;
        }
        let score: f64 = field(path, line, "score", fields[5])?;
        if !score.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("score {score} is not finite"),
            });
        }
        let bbox = BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| Error::Validation {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        out.push(Detection {
            frame_index,
            bbox,
            score,
        });
    }
    out.sort_by_key(|d| d.frame_index);
    Ok(out)
}

pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let b = d.bbox;
        writeln!(s, "{} {} {} {} {} {}", d.frame_index, b.x0, b.y0, b.x1, b.y1, d.score).unwrap();
    }
    s
}

/// Parses `frame_index joint_name x y` lines into one [`Keypoints`] per
/// frame, ordered by frame index.
pub fn parse_keypoints(text: &str, path: &Path) -> Result<Vec<Keypoints>> {
    let mut frames: BTreeMap<u32, Keypoints> = BTreeMap::new();
    for (line, fields) in records(text) {
        if fields.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let frame_index: u32 = field(path, line, "frame_index", fields[0])?;
        let joint = Joint::from_name(fields[1]).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("unknown joint {:?}", fields[1]),
        })?;
        let x: f64 = field(path, line, "x", fields[2])?;
        let y: f64 = field(path, line, "y", fields[3])?;
        let invalid = |msg: String| Error::Validation {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if !(x.is_finite() && y.is_finite()) {
            return Err(invalid(format!("non-finite coordinate ({x}, {y})")));
        }
        let entry = frames.entry(frame_index).or_insert_with(|| Keypoints {
            frame_index,
            joints: BTreeMap::new(),
        });
        if entry.joints.insert(joint, (x, y)).is_some() {
            return Err(invalid(format!(
                "joint {} given twice for frame {frame_index}",
                joint.name()
            )));
        }
    }
    Ok(frames.into_values().collect())
}

pub fn format_keypoints(kps: &[Keypoints]) -> String {
    let mut s = String::new();
    for k in kps {
        for (joint, (x, y)) in &k.joints {
            writeln!(s, "{} {} {} {}", k.frame_index, joint.name(), x, y).unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("dets.txt")
    }

    #[test]
    fn parses_one_detection() {
        let dets = parse_detections("4 10 20 110 220 1.5\n", p()).unwrap();
        assert_eq!(
            dets,
            vec![Detection {
                frame_index: 4,
                bbox: BBox::new(10, 20, 110, 220).unwrap(),
                score: 1.5
            }]
        );
    }

    #[test]
    fn zero_width_box_is_a_validation_error() {
        let err = parse_detections("# header\n4 10 20 10 220 1.0\n", p()).unwrap_err();
        assert!(matches!(err, Error::Validation { line: 2, .. }), "{err}");
    }

    #[test]
    fn non_numeric_field_reports_line() {
        let err = parse_detections("1 0 0 5 5 1\n2 a 0 5 5 1\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_detections("1 0 0 5 5\n", p()).is_err());
        assert!(parse_detections("1 0 0 5 5 nan\n", p()).is_err());
    }

    #[test]
    fn empty_and_sorted() {
        assert!(parse_detections("", p()).unwrap().is_empty());
        let dets = parse_detections("3 0 0 5 5 1\n1 0 0 6 6 2\n3 1 1 4 4 3\n", p()).unwrap();
        let order: Vec<_> = dets.iter().map(|d| (d.frame_index, d.score)).collect();
        assert_eq!(order, vec![(1, 2.0), (3, 1.0), (3, 3.0)]);
    }

    #[test]
    fn keypoints_group_by_frame() {
        let text = "2 face 10 5\n0 ankle_mid 3.5 9\n2 belly 11 20\n";
        let kps = parse_keypoints(text, p()).unwrap();
        assert_eq!(kps.len(), 2);
        assert_eq!(kps[0].frame_index, 0);
        assert_eq!(kps[1].joints[&Joint::Belly], (11.0, 20.0));
        assert_eq!(parse_keypoints(&format_keypoints(&kps), p()).unwrap(), kps);
    }

    #[test]
    fn keypoint_errors() {
        assert!(matches!(
            parse_keypoints("0 elbow 1 1\n", p()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_keypoints("0 face 1 inf\n", p()),
            Err(Error::Validation { .. })
        ));
        assert!(matches!(
            parse_keypoints("0 face 1 1\n0 face 2 2\n", p()),
            Err(Error::Validation { line: 2, .. })
        ));
    }
}
