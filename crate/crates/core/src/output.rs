//! Output directories: CSV series, a plain-text manifest and SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::evolve::RunReport;

/// Name and version of the library, recorded in every manifest.
pub fn version_string() -> String {
    format!("hyperlayer {}", env!("CARGO_PKG_VERSION"))
}

/// A directory that receives the files of one command.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(path.as_ref())?;
        Ok(Self {
            root: path.as_ref().to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// A subdirectory, created on demand.
    pub fn child(&self, name: &str) -> Result<Self> {
        Self::create(self.root.join(name))
    }

    /// Writes `manifest.txt`: version, command, extra `key = value` lines
    /// and the full configuration text.
    pub fn write_manifest(&self, command: &str, entries: &[(String, String)], config: &str) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "version = {}", version_string());
        let _ = writeln!(s, "command = {command}");
        for (k, v) in entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n# configuration");
        s.push_str(config);
        if !config.ends_with('\n') {
            s.push('\n');
        }
        fs::write(self.path("manifest.txt"), s)?;
        Ok(())
    }

    /// Writes a CSV file with a header row. Values use the shortest
    /// representation that reads back to the same `f64`.
    pub fn write_csv<I>(&self, name: &str, headers: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(headers)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes a CSV file of text cells.
    pub fn write_table(&self, name: &str, headers: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(headers)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_svg(&self, name: &str, plot: &LinePlot) -> Result<()> {
        fs::write(self.path(name), plot.to_svg())?;
        Ok(())
    }
}

/// File-name form of a coordinate value, e.g. `-2.5` → `m2.5`.
pub fn tag(x: f64) -> String {
    let s = format!("{x}");
    s.replace('-', "m")
}

/// Writes the series of one run:
/// `norms.csv`, `snapshots.csv`, one `observer_<ρ>_<field>.csv` per
/// observer and field, and `norms.svg`.
pub fn write_run(dir: &OutputDir, report: &RunReport) -> Result<()> {
    let names: Vec<&str> = report.field_names.iter().map(String::as_str).collect();

    let mut h = vec!["tau"];
    let norm_cols: Vec<String> = names.iter().map(|n| format!("l2_{n}")).collect();
    h.extend(norm_cols.iter().map(String::as_str));
    dir.write_csv(
        "norms.csv",
        &h,
        report.norms.iter().map(|(t, n)| {
            let mut row = vec![*t];
            row.extend(n);
            row
        }),
    )?;

    let mut h = vec!["tau", "rho"];
    h.extend(names.iter());
    let rows = report.snapshots.iter().flat_map(|s| {
        report.nodes.iter().enumerate().map(move |(i, &rho)| {
            let mut row = vec![s.tau, rho];
            row.extend(s.fields.iter().map(|f| f[i]));
            row
        })
    });
    dir.write_csv("snapshots.csv", &h, rows)?;

    for o in &report.observers {
        dir.write_csv(
            &format!("observer_{}_{}.csv", tag(o.rho), o.field),
            &["tau", "value"],
            o.tau.iter().zip(&o.values).map(|(t, v)| vec![*t, *v]),
        )?;
    }

    let series = names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let pts = report.norms.iter().map(|(t, v)| (*t, v[k])).collect();
            (n.to_string(), pts)
        })
        .collect();
    dir.write_svg(
        "norms.svg",
        &LinePlot {
            title: "L2 norm".into(),
            x_label: "τ".into(),
            y_label: "L2".into(),
            log_y: true,
            series,
        },
    )
}

/// A static line chart.
#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot log10 of the values; non-positive values are skipped.
    pub log_y: bool,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

const COLORS: [&str; 8] = [
    "#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let (w, h) = (720.0, 440.0);
        let (ml, mr, mt, mb) = (70.0, 150.0, 40.0, 50.0);
        let pw = w - ml - mr;
        let ph = h - mt - mb;
        let tr = |y: f64| if self.log_y { (y > 0.0).then(|| y.log10()) } else { Some(y) };
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|(_, s)| {
                s.iter()
                    .filter_map(|&(x, y)| tr(y).filter(|v| v.is_finite() && x.is_finite()).map(|v| (x, v)))
                    .collect()
            })
            .collect();
        let all = pts.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 <= 0.0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            ml + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let ylab = if self.log_y { format!("1e{fy:.1}") } else { format!("{fy:.3}") };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.3}</text>"#,
                sx(fx),
                mt + ph + 18.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#,
                ml - 6.0,
                sy(fy) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            ml + pw / 2.0,
            h - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, ((label, _), p)) in self.series.iter().zip(&pts).enumerate() {
            let color = COLORS[k % COLORS.len()];
            if !p.is_empty() {
                let coords: Vec<String> =
                    p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    coords.join(" ")
                );
            }
            let ly = mt + 14.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                ml + pw + 10.0,
                ml + pw + 30.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                ml + pw + 36.0,
                ly + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_values_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        let x = 0.1 + 0.2;
        out.write_csv("a.csv", &["tau", "value"], vec![vec![1.0, x]]).unwrap();
        let text = std::fs::read_to_string(out.path("a.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tau,value"));
        let v: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v.to_bits(), x.to_bits());
    }

    #[test]
    fn manifest_has_version_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        out.write_manifest("run x", &[("jobs".into(), "2".into())], "name = \"x\"\n").unwrap();
        let text = std::fs::read_to_string(out.path("manifest.txt")).unwrap();
        assert!(text.starts_with("version = hyperlayer "));
        assert!(text.contains("command = run x"));
        assert!(text.contains("name = \"x\""));
    }

    #[test]
    fn svg_skips_nonpositive_values_in_log_mode() {
        let p = LinePlot {
            title: "a < b".into(),
            log_y: true,
            series: vec![("s".into(), vec![(0.0, 1.0), (1.0, 0.0), (2.0, 1e-3)])],
            ..Default::default()
        };
        let svg = p.to_svg();
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn tags_are_file_safe() {
        assert_eq!(tag(-2.5), "m2.5");
        assert_eq!(tag(15.0), "15");
    }
}
