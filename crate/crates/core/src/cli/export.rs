use std::fs;
use std::path::Path;

use crate::dataset::{write_png_rgb, ImageRecord};
use crate::error::{Error, Result};
use crate::infogan::ClusterAssignment;
use crate::scalar::Scalar;

/// `image_id,category,post_0..post_{k-1},con_0..con_{c-1}` with six
/// decimals; rows in input order. Empty continuous estimates leave their
/// cells blank.
pub fn export_assignments<T: Scalar>(
    assignments: &[ClusterAssignment<T>],
    n_con: usize,
    out_path: &Path,
) -> Result<()> {
    let first = assignments.first().ok_or(Error::EmptyInput)?;
    let k = first.posterior.len();
    let mut out = String::from("image_id,category");
    for j in 0..k {
        out.push_str(&format!(",post_{j}"));
    }
    for j in 0..n_con {
        out.push_str(&format!(",con_{j}"));
    }
    out.push('\n');
    for a in assignments {
        if a.posterior.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "`{}` has {} posterior entries, expected {k}",
                a.image_id,
                a.posterior.len()
            )));
        }
        out.push_str(&a.image_id);
        out.push_str(&format!(",{}", a.category));
        for p in &a.posterior {
            out.push_str(&format!(",{:.6}", p.to_f64_lossy()));
        }
        for j in 0..n_con {
            out.push(',');
            if let Some(c) = a.con_estimate.get(j) {
                out.push_str(&format!("{:.6}", c.to_f64_lossy()));
            }
        }
        out.push('\n');
    }
    if let Some(dir) = out_path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(out_path, out)?;
    Ok(())
}

/// Inverse of [`export_assignments`] up to the six-decimal rounding.
pub fn read_assignments(path: &Path) -> Result<Vec<ClusterAssignment<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or(Error::EmptyInput)?.split(',').collect();
    let k = header.iter().filter(|h| h.starts_with("post_")).count();
    let bad = |detail: String| Error::config(path.display().to_string(), detail);
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(bad(format!("row {} has {} cells", row + 1, cells.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| bad(format!("row {}: `{s}` is not a number", row + 1)))
        };
        let category = cells[1]
            .parse::<usize>()
            .map_err(|_| bad(format!("row {}: bad category", row + 1)))?;
        let posterior = cells[2..2 + k].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let con_estimate = cells[2 + k..]
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| num(s))
            .collect::<Result<_>>()?;
        out.push(ClusterAssignment {
            image_id: cells[0].to_string(),
            category,
            posterior,
            con_estimate,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// One-hot assignments for hard labels, e.g. from K-means.
pub fn hard_assignments<T: Scalar>(
    records: &[ImageRecord<T>],
    labels: &[usize],
    k: usize,
) -> Vec<ClusterAssignment<T>> {
    records
        .iter()
        .zip(labels)
        .map(|(r, &l)| {
            let mut posterior = vec![T::zero(); k];
            posterior[l] = T::one();
            ClusterAssignment {
                image_id: r.id.clone(),
                category: l,
                posterior,
                con_estimate: Vec::new(),
            }
        })
        .collect()
}

/// One row per occupied category (ascending), each with up to
/// `per_cluster` images in descending confidence; unused slots stay black.
/// Returns the montage's `(height, width)`.
pub fn export_cluster_montage<T: Scalar>(
    records: &[ImageRecord<T>],
    assignments: &[ClusterAssignment<T>],
    per_cluster: usize,
    out_path: &Path,
) -> Result<(usize, usize)> {
    if records.len() != assignments.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: assignments.len(),
        });
    }
    let first = records.first().ok_or(Error::EmptyInput)?;
    let (h, w) = first.size();
    if per_cluster == 0 {
        return Err(Error::config("per_cluster", "must be at least 1"));
    }
    let k = assignments.iter().map(|a| a.category).max().unwrap() + 1;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, a) in assignments.iter().enumerate() {
        rows[a.category].push(i);
    }
    let rows: Vec<Vec<usize>> = rows
        .into_iter()
        .filter(|r| !r.is_empty())
        .map(|mut r| {
            // Stable: equal confidences keep input order.
            r.sort_by(|&a, &b| {
                assignments[b]
                    .confidence()
                    .partial_cmp(&assignments[a].confidence())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            r.truncate(per_cluster);
            r
        })
        .collect();
    let (mh, mw) = (rows.len() * h, per_cluster * w);
    let mut px = vec![T::zero(); mh * mw * 3];
    for (ri, row) in rows.iter().enumerate() {
        for (ci, &i) in row.iter().enumerate() {
            let rec = &records[i];
            if rec.size() != (h, w) {
                return Err(Error::MixedSizes(format!("`{}`", rec.id)));
            }
            for y in 0..h {
                let dst = ((ri * h + y) * mw + ci * w) * 3;
                px[dst..dst + w * 3].copy_from_slice(&rec.pixels[y * w * 3..(y + 1) * w * 3]);
            }
        }
    }
    write_png_rgb(out_path, mh, mw, &px)?;
    Ok((mh, mw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignment(id: &str, post: Vec<f64>) -> ClusterAssignment<f64> {
        let category = crate::scalar::argmax(&post);
        ClusterAssignment {
            image_id: id.into(),
            category,
            posterior: post,
            con_estimate: vec![0.25, -0.5],
        }
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut post = vec![0.0; 25];
        post[3] = 0.7;
        post[4] = 0.3;
        let a = vec![assignment("img", post)];
        export_assignments(&a, 2, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        // image_id, category, 25 posteriors, 2 continuous codes
        assert_eq!(lines[0].split(',').count(), 29);
        assert_eq!(lines[1].split(',').count(), 29);
        assert!(lines[0].ends_with("post_24,con_0,con_1"));
        let back = read_assignments(&path).unwrap();
        assert_eq!(back[0].category, 3);
        assert!((back[0].posterior.iter().sum::<f64>() - 1.0).abs() <= 5e-6);
        assert_eq!(back[0].con_estimate, vec![0.25, -0.5]);
        assert!(matches!(
            export_assignments::<f64>(&[], 2, &path),
            Err(Error::EmptyInput)
        ));
    }

    fn rec(id: &str, v: f64) -> ImageRecord<f64> {
        ImageRecord::new(id, 2, 2, vec![v; 12])
    }

    #[test]
    fn montage_rows_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let recs = vec![rec("a", 0.2), rec("b", 0.6), rec("c", 1.0)];
        let asg = vec![
            assignment("a", vec![0.6, 0.4, 0.0]),
            assignment("b", vec![0.9, 0.1, 0.0]),
            assignment("c", vec![0.1, 0.0, 0.9]),
        ];
        // Category 1 is empty and gets no row.
        assert_eq!(export_cluster_montage(&recs, &asg, 1, &path).unwrap(), (4, 2));
        let (_, _, px) = crate::dataset::read_png_rgb::<f64>(&path).unwrap();
        // Row 0 shows `b`, the most confident member of category 0.
        assert!((px[0] - 0.6).abs() < 0.01);
        assert!((px[2 * 2 * 3] - 1.0).abs() < 0.01);
        let one = vec![
            assignment("a", vec![1.0, 0.0]),
            assignment("b", vec![1.0, 0.0]),
        ];
        assert_eq!(
            export_cluster_montage(&recs[..2], &one, 4, &path).unwrap(),
            (2, 8)
        );
    }
}
