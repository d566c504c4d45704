//! CSV and SVG emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::config::config_error;

/// Where numeric output goes: files under a directory, or stdout.
pub struct Sink {
    dir: Option<PathBuf>,
    svg: bool,
}

impl Sink {
    pub fn new(dir: Option<&str>, svg: bool) -> anyhow::Result<Self> {
        let dir = dir.map(PathBuf::from);
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| config_error(format!("cannot create {}: {e}", d.display())))?;
            let probe = d.join(".lagrindex-write-test");
            fs::write(&probe, b"").map_err(|e| config_error(format!("{} is not writable: {e}", d.display())))?;
            let _ = fs::remove_file(probe);
        }
        Ok(Self { dir, svg })
    }

    /// Writes `name`, or prints it to stdout when no directory was given.
    pub fn csv(&self, name: &str, body: &str) -> anyhow::Result<()> {
        match &self.dir {
            Some(d) => write_file(&d.join(name), body),
            None => {
                println!("--- {name}");
                print!("{body}");
                Ok(())
            }
        }
    }

    /// SVG goes only to files, and only when requested.
    pub fn svg(&self, name: &str, render: impl FnOnce() -> String) -> anyhow::Result<()> {
        match (&self.dir, self.svg) {
            (Some(d), true) => write_file(&d.join(name), &render()),
            (None, true) => {
                eprintln!("note: --svg needs --out; {name} not written");
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn text(&self, name: &str, body: &str) -> anyhow::Result<()> {
        match &self.dir {
            Some(d) => write_file(&d.join(name), body),
            None => Ok(()),
        }
    }
}

fn write_file(path: &Path, body: &str) -> anyhow::Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// CSV text with a `#` comment header.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[(&str, String)], columns: &[String]) -> Self {
        let mut text = String::new();
        for (k, v) in header {
            let _ = writeln!(text, "# {k}: {v}");
        }
        let _ = writeln!(text, "{}", columns.join(","));
        Self { text }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().collect();
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// A step plot of integer values `y` over `x`: each value holds until the
/// next abscissa.
pub fn step_svg(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[Option<usize>], x_end: f64) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let x0 = xs.first().copied().unwrap_or(0.0);
    let x1 = x_end.max(x0 + f64::EPSILON);
    let y_max = ys.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - y / y_max * (H - 2.0 * M);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{M},{} H{} M{M},{} V{M}" stroke="black" fill="none"/>"#,
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for k in 0..=(y_max as usize) {
        let y = py(k as f64);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{k}</text>"#, M - 6.0, y + 3.0);
    }
    for (x, label) in [(x0, x0), (x1, x1)] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="middle">{label:.4}</text>"#, px(x), H - M + 14.0);
    }

    // one path segment per run of defined values
    let mut d = String::new();
    let mut open = false;
    for (i, (&x, y)) in xs.iter().zip(ys).enumerate() {
        let next = xs.get(i + 1).copied().unwrap_or(x1);
        match y {
            Some(y) => {
                let yy = py(*y as f64);
                if open {
                    let _ = write!(d, " V{yy:.2}");
                } else {
                    let _ = write!(d, " M{:.2},{yy:.2}", px(x));
                    open = true;
                }
                let _ = write!(d, " H{:.2}", px(next));
            }
            None => open = false,
        }
    }
    let _ = writeln!(s, r#"<path d="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#, d.trim());
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
