//! Part-centroid evaluation against annotated joints.
//!
//! Every part's location is the centroid of its labelled pixels, with pixel
//! `(x, y)` contributing the integer coordinate `(x, y)`. Each joint is
//! scored by its Euclidean distance in pixels to the centroid of the part it
//! is mapped to. Frames where the part is absent or the joint unannotated
//! do not contribute; `count` reports how many did.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::{Joint, Keypoints};
use crate::supervise::PartLabelMap;

/// Which joints are scored against which part.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartJointMapping {
    entries: BTreeMap<u8, Vec<Joint>>,
}

impl PartJointMapping {
    pub fn new(entries: BTreeMap<u8, Vec<Joint>>) -> Result<Self> {
        let mut seen = Vec::new();
        for joints in entries.values() {
            for j in joints {
                if seen.contains(j) {
                    return Err(Error::Invalid(format!(
                        "joint {} mapped to more than one part",
                        j.name()
                    )));
                }
                seen.push(*j);
            }
        }
        Ok(Self { entries })
    }

    /// Five parts: face, shoulders, belly, hips, and knees plus ankles
    /// together on the bottom part.
    pub fn five_part() -> Self {
        Self::for_parts(5)
    }

    /// The five-part layout rescaled to `parts` bands: the joint whose
    /// five-part slot is `s` goes to part `ceil(s * parts / 5)`.
    pub fn for_parts(parts: u8) -> Self {
        let slots = [
            (Joint::Face, 1u32),
            (Joint::ShoulderMid, 2),
            (Joint::Belly, 3),
            (Joint::HipMid, 4),
            (Joint::KneeMid, 5),
            (Joint::AnkleMid, 5),
        ];
        let mut entries: BTreeMap<u8, Vec<Joint>> = BTreeMap::new();
        for (joint, slot) in slots {
            let part = (slot * parts as u32).div_ceil(5).max(1) as u8;
            entries.entry(part).or_default().push(joint);
        }
        Self { entries }
    }

    /// `(part, joint)` pairs in part order.
    pub fn pairs(&self) -> Vec<(u8, Joint)> {
        self.entries
            .iter()
            .flat_map(|(&p, js)| js.iter().map(move |&j| (p, j)))
            .collect()
    }
}

/// Mean pixel coordinate of the pixels labelled `part`.
pub fn part_centroid(map: &PartLabelMap, part: u8) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (i, &l) in map.labels().iter().enumerate() {
        if l == part {
            sx += (i % map.width()) as f64;
            sy += (i / map.width()) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

pub fn centroid_distance(c: (f64, f64), joint: (f64, f64)) -> f64 {
    (c.0 - joint.0).hypot(c.1 - joint.1)
}

/// Distances of one frame; `None` where the part or the joint is missing.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub frame_index: u32,
    pub distances: BTreeMap<(u8, Joint), Option<f64>>,
}

pub fn evaluate_frame(map: &PartLabelMap, keypoints: &Keypoints, mapping: &PartJointMapping) -> EvalRecord {
    let mut centroids: BTreeMap<u8, Option<(f64, f64)>> = BTreeMap::new();
    let distances = mapping
        .pairs()
        .into_iter()
        .map(|(part, joint)| {
            let c = *centroids.entry(part).or_insert_with(|| part_centroid(map, part));
            let d = c
                .zip(keypoints.joints.get(&joint).copied())
                .map(|(c, j)| centroid_distance(c, j));
            ((part, joint), d)
        })
        .collect();
    EvalRecord {
        frame_index: map.frame_index(),
        distances,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub part: u8,
    pub joint: Joint,
    /// `None` when no frame contributed.
    pub mean_distance: Option<f64>,
    pub count: usize,
}

/// Per-(part, joint) mean over the records that have both a centroid and
/// the joint. Records are summed in frame order so the result does not
/// depend on input order.
pub fn aggregate_report(records: &[EvalRecord], mapping: &PartJointMapping) -> Vec<ReportRow> {
    let mut ordered: Vec<&EvalRecord> = records.iter().collect();
    ordered.sort_by_key(|r| r.frame_index);
    mapping
        .pairs()
        .into_iter()
        .map(|(part, joint)| {
            let ds: Vec<f64> = ordered
                .iter()
                .filter_map(|r| r.distances.get(&(part, joint)).copied().flatten())
                .collect();
            ReportRow {
                part,
                joint,
                mean_distance: (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64),
                count: ds.len(),
            }
        })
        .collect()
}

pub const REPORT_HEADER: &str = "part,joint,mean_distance_px,count";

/// CSV with [`REPORT_HEADER`]; missing means are written as `NA`.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in rows {
        let mean = r.mean_distance.map_or_else(|| "NA".to_string(), |m| format!("{m:.6}"));
        writeln!(s, "{},{},{},{}", r.part, r.joint.name(), mean, r.count).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(w: usize, h: usize, pixels: &[(usize, usize, u8)]) -> PartLabelMap {
        let mut labels = vec![0; w * h];
        for &(x, y, l) in pixels {
            labels[y * w + x] = l;
        }
        PartLabelMap::new(w, h, 5, 0, labels).unwrap()
    }

    #[test]
    fn centroids() {
        let m = map_with(30, 30, &[(10, 20, 1), (11, 20, 1), (10, 21, 1), (11, 21, 1), (7, 3, 2)]);
        assert_eq!(part_centroid(&m, 1), Some((10.5, 20.5)));
        assert_eq!(part_centroid(&m, 2), Some((7.0, 3.0)));
        assert_eq!(part_centroid(&m, 3), None);
    }

    #[test]
    fn distances() {
        assert_eq!(centroid_distance((0.0, 0.0), (3.0, 4.0)), 5.0);
        assert_eq!(centroid_distance((2.5, 2.5), (2.5, 2.5)), 0.0);
        assert_eq!(centroid_distance((1.0, 1.0), (1.0, 4.0)), 3.0);
    }

    #[test]
    fn default_mapping_matches_table_rows() {
        let pairs = PartJointMapping::five_part().pairs();
        assert_eq!(
            pairs,
            vec![
                (1, Joint::Face),
                (2, Joint::ShoulderMid),
                (3, Joint::Belly),
                (4, Joint::HipMid),
                (5, Joint::KneeMid),
                (5, Joint::AnkleMid)
            ]
        );
        let three: Vec<u8> = PartJointMapping::for_parts(3).pairs().iter().map(|p| p.0).collect();
        assert_eq!(three, vec![1, 2, 2, 3, 3, 3]);
        assert!(PartJointMapping::for_parts(1).pairs().iter().all(|p| p.0 == 1));
        let dup = BTreeMap::from([(1, vec![Joint::Face]), (2, vec![Joint::Face])]);
        assert!(PartJointMapping::new(dup).is_err());
    }

    fn record(frame_index: u32, face: Option<f64>, knee: Option<f64>) -> EvalRecord {
        EvalRecord {
            frame_index,
            distances: BTreeMap::from([((1, Joint::Face), face), ((5, Joint::KneeMid), knee)]),
        }
    }

    #[test]
    fn aggregation() {
        let mapping =
            PartJointMapping::new(BTreeMap::from([(1, vec![Joint::Face]), (5, vec![Joint::KneeMid])])).unwrap();
        let recs = vec![
            record(0, Some(3.0), Some(1.0)),
            record(1, Some(4.0), None),
            record(2, Some(5.0), Some(2.0)),
        ];
        let rows = aggregate_report(&recs, &mapping);
        assert_eq!(rows[0].mean_distance, Some(4.0));
        assert_eq!(rows[0].count, 3);
        assert_eq!(rows[1].mean_distance, Some(1.5));
        assert_eq!(rows[1].count, 2);

        let empty = aggregate_report(&[], &mapping);
        assert!(empty.iter().all(|r| r.mean_distance.is_none() && r.count == 0));
        assert_eq!(
            format_report(&empty),
            "part,joint,mean_distance_px,count\n1,face,NA,0\n5,knee_mid,NA,0\n"
        );
    }

    #[test]
    fn evaluate_marks_missing() {
        let m = map_with(10, 10, &[(2, 2, 1)]);
        let kp = Keypoints {
            frame_index: 0,
            joints: BTreeMap::from([(Joint::Face, (2.0, 5.0)), (Joint::KneeMid, (1.0, 1.0))]),
        };
        let rec = evaluate_frame(&m, &kp, &PartJointMapping::five_part());
        assert_eq!(rec.distances[&(1, Joint::Face)], Some(3.0));
        assert_eq!(rec.distances[&(5, Joint::KneeMid)], None);
        assert_eq!(rec.distances[&(2, Joint::ShoulderMid)], None);
    }
}
