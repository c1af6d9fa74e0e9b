use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use finsler_morse::loopspace::DiscreteCurve;
use finsler_morse::manifold::ManifoldKind;
use serde::Serialize;
use serde_json::Value;

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `"<"`, `">"`, `"<="`, `">="` or `"=="`.
    pub relation: &'static str,
    pub pass: bool,
}

#[derive(Debug, Default)]
pub struct Checks(pub Vec<Check>);

impl Checks {
    pub fn less(&mut self, name: &str, value: f64, tol: f64) {
        self.push(name, value, tol, "<", value < tol);
    }

    pub fn greater(&mut self, name: &str, value: f64, tol: f64) {
        self.push(name, value, tol, ">", value > tol);
    }

    pub fn flag(&mut self, name: &str, ok: bool) {
        self.push(name, if ok { 1.0 } else { 0.0 }, 1.0, "==", ok);
    }

    fn push(&mut self, name: &str, value: f64, tolerance: f64, relation: &'static str, pass: bool) {
        self.0.push(Check { name: name.to_string(), value, tolerance, relation, pass });
    }

    pub fn all_pass(&self) -> bool {
        self.0.iter().all(|c| c.pass)
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.root.join(name);
        fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
    }

    pub fn json(&self, name: &str, value: &Value) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

/// `index,t,x0..,speed` with `t = i / intervals`; torus nodes are unwrapped
/// so the polyline is continuous.
pub fn curve_csv(curve: &DiscreteCurve, speed: impl Fn(&[f64], &[f64]) -> f64) -> String {
    let d = curve.dim();
    let mut out = String::from("index,t");
    for c in 0..d {
        out += &format!(",x{c}");
    }
    out += ",speed\n";
    let torus = curve.manifold().kind() == ManifoldKind::FlatTorus;
    let mut lift = curve.node(0).to_vec();
    let n = curve.len();
    for i in 0..n {
        if i > 0 && torus {
            let s = curve.step(i - 1);
            lift.iter_mut().zip(&s).for_each(|(x, y)| *x += y);
        } else if i > 0 {
            lift = curve.node(i).to_vec();
        }
        let v = curve.velocity(if i < curve.intervals() { i } else { i - 1 });
        out += &format!("{i},{}", num(i as f64 / curve.intervals() as f64));
        for x in &lift {
            out += &format!(",{}", num(*x));
        }
        out += &format!(",{}\n", num(speed(curve.node(i), &v)));
    }
    out
}
