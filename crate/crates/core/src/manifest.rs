//! Frame manifests: one frame per line, `scan_path x y yaw [dx dy dyaw]`,
//! with `#` starting a comment. Relative scan paths resolve against the
//! manifest's directory.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Pose2;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub scan_path: PathBuf,
    pub pose: Pose2,
    pub odom_delta: Option<Pose2>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative scan paths are resolved against.
    pub base_dir: PathBuf,
}

fn number(field: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Format(format!("manifest line {line}: bad number {field:?}"))),
    }
}

impl Manifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 && fields.len() != 7 {
                return Err(Error::Format(format!(
                    "manifest line {}: expected 4 or 7 fields, got {}",
                    k + 1,
                    fields.len()
                )));
            }
            let v = fields[1..]
                .iter()
                .map(|f| number(f, k + 1))
                .collect::<Result<Vec<f64>>>()?;
            entries.push(ManifestEntry {
                scan_path: PathBuf::from(fields[0]),
                pose: Pose2::new(v[0], v[1], v[2]),
                odom_delta: (v.len() == 6).then(|| Pose2::new(v[3], v[4], v[5])),
            });
        }
        Ok(Self {
            entries,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# scan_path x y yaw dx dy dyaw\n");
        for e in &self.entries {
            out.push_str(&format!("{} {} {} {}", e.scan_path.display(), e.pose.x, e.pose.y, e.pose.yaw));
            if let Some(d) = e.odom_delta {
                out.push_str(&format!(" {} {} {}", d.x, d.y, d.yaw));
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose2> {
        self.entries.iter().map(|e| e.pose).collect()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.scan_path.is_absolute() {
            entry.scan_path.clone()
        } else {
            self.base_dir.join(&entry.scan_path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_row_shapes_and_comments() {
        let text = "# header\nscans/a.bin 1 2 0.5\n\nscans/b.bin 2 2 0.5 1 0 0 # moved\n";
        let m = Manifest::parse(text, Path::new("/data")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].odom_delta, None);
        assert_eq!(m.entries[1].odom_delta, Some(Pose2::new(1.0, 0.0, 0.0)));
        assert_eq!(m.resolve(&m.entries[1]), PathBuf::from("/data/scans/b.bin"));
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(Manifest::parse("a.bin 1 2\n", Path::new(".")).is_err());
        assert!(Manifest::parse("a.bin 1 2 x\n", Path::new(".")).is_err());
        assert!(Manifest::parse("a.bin 1 2 nan\n", Path::new(".")).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = Manifest {
            entries: vec![ManifestEntry {
                scan_path: "s/0.bin".into(),
                pose: Pose2::new(0.1 + 0.2, -1.0 / 3.0, 2.5),
                odom_delta: Some(Pose2::new(1e-17, 0.0, -0.001)),
            }],
            base_dir: ".".into(),
        };
        assert_eq!(Manifest::parse(&m.to_text(), Path::new(".")).unwrap(), m);
    }
}
