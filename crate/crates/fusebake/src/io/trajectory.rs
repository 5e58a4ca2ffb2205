//! Plain-text camera trajectory files.
//!
//! Line one is the header `fbtraj 1`. Every following non-empty line is
//! one camera pose: a frame number, the nine rotation entries in row-major
//! order, and the translation, all space-separated:
//!
//! ```text
//! fbtraj 1
//! 0 1 0 0 0 1 0 0 0 1 0 0 0
//! 1 0.995 0 0.0998 0 1 0 -0.0998 0 0.995 12.5 0 -3.1
//! ```
//!
//! Numbers use shortest round-trip formatting, so writing and reading
//! back reproduces the poses exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, RigidTransform, Vec3};

const HEADER: &str = "fbtraj 1";

/// Writes poses with frame numbers counting up from zero.
pub fn write_trajectory(path: &Path, poses: &[RigidTransform]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{HEADER}")?;
    for (i, pose) in poses.iter().enumerate() {
        write!(out, "{i}")?;
        for r in 0..3 {
            for c in 0..3 {
                write!(out, " {}", pose.rotation[(r, c)])?;
            }
        }
        let t = pose.translation;
        writeln!(out, " {} {} {}", t.x, t.y, t.z)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads poses written by [`write_trajectory`].
///
/// Frame numbers must count up from zero without gaps, and every rotation
/// must be orthonormal.
pub fn read_trajectory(path: &Path) -> Result<Vec<RigidTransform>> {
    let input = BufReader::new(File::open(path)?);
    let bad = |reason: String| Error::Format {
        path: path.display().to_string(),
        reason,
    };

    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| bad("empty file".into()))?;
    if header.trim() != HEADER {
        return Err(bad(format!("bad header {header:?}, expected {HEADER:?}")));
    }
    let mut poses = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.len() != 13 {
            return Err(bad(format!(
                "line {}: expected 13 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("line {}: bad frame number", lineno + 2)))?;
        if id != poses.len() {
            return Err(bad(format!(
                "line {}: frame {} out of order, expected {}",
                lineno + 2,
                id,
                poses.len()
            )));
        }
        let mut nums = [0.0f64; 12];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field
                .parse()
                .map_err(|_| bad(format!("line {}: bad number {field:?}", lineno + 2)))?;
        }
        let rotation = Mat3::from_row_slice(&nums[0..9]);
        let translation = Vec3::new(nums[9], nums[10], nums[11]);
        let pose = RigidTransform::new(rotation, translation)
            .map_err(|e| bad(format!("line {}: {e}", lineno + 2)))?;
        poses.push(pose);
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use crate::synth::orbit_trajectory;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orbit.fbtraj");
        let traj = orbit_trajectory(Vec3::new(3.0, -7.0, 950.0), 760.0, 9, 21.5).unwrap();
        write_trajectory(&path, &traj.poses).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.len(), 9);
        for (a, b) in traj.poses.iter().zip(&back) {
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(a.translation, b.translation);
        }
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fbtraj");

        std::fs::write(&path, "wrong 2\n").unwrap();
        assert!(read_trajectory(&path).is_err());

        std::fs::write(&path, "fbtraj 1\n0 1 0 0\n").unwrap();
        assert!(read_trajectory(&path).is_err());

        // out-of-order frame ids
        std::fs::write(
            &path,
            "fbtraj 1\n1 1 0 0 0 1 0 0 0 1 0 0 0\n",
        )
        .unwrap();
        assert!(read_trajectory(&path).is_err());

        // a matrix that is not a rotation
        std::fs::write(
            &path,
            "fbtraj 1\n0 2 0 0 0 2 0 0 0 2 0 0 0\n",
        )
        .unwrap();
        assert!(read_trajectory(&path).is_err());
    }

    #[test]
    fn blank_lines_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spaced.fbtraj");
        let pose = look_at(
            Vec3::new(100.0, 50.0, -400.0),
            Vec3::new(0.0, 0.0, 500.0),
            Vec3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        write_trajectory(&path, &[pose]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, format!("{text}\n\n")).unwrap();
        assert_eq!(read_trajectory(&path).unwrap().len(), 1);
    }
}
