use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ablation::{LengthRow, SpatialAblation};
use super::metrics::{F1Report, LinkMetrics};
use super::omission::OmissionCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypingReport {
    pub model: F1Report,
    pub baseline: Option<F1Report>,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub kind: String,
    pub seed: u64,
    #[serde(default)]
    pub typing: Option<TypingReport>,
    #[serde(default)]
    pub linking: Option<LinkMetrics>,
    #[serde(default)]
    pub omission: Option<OmissionCurve>,
    #[serde(default)]
    pub length: Option<Vec<LengthRow>>,
    #[serde(default)]
    pub spatial: Option<SpatialAblation>,
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Input(format!("metric {name} = {v} is outside [0, 1]")))
    }
}

fn check_link(prefix: &str, m: &LinkMetrics) -> Result<()> {
    unit(&format!("{prefix}.mrr"), m.mrr)?;
    let mut prev = 0.0;
    for (k, &r) in &m.recall {
        unit(&format!("{prefix}.recall@{k}"), r)?;
        if r < prev {
            return Err(Error::Input(format!("{prefix}: recall@{k} decreases")));
        }
        prev = r;
    }
    Ok(())
}

fn check_f1(prefix: &str, r: &F1Report) -> Result<()> {
    unit(&format!("{prefix}.micro_f1"), r.micro_f1)?;
    for (c, &f) in &r.per_class {
        unit(&format!("{prefix}.{c}"), f)?;
    }
    Ok(())
}

impl EvalReport {
    pub fn new(kind: &str, seed: u64) -> Self {
        EvalReport { kind: kind.into(), seed, typing: None, linking: None, omission: None, length: None, spatial: None }
    }

    /// Every metric in [0, 1] and recall non-decreasing in K.
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = &self.typing {
            check_f1("typing.model", &t.model)?;
            if let Some(b) = &t.baseline {
                check_f1("typing.baseline", b)?;
            }
        }
        if let Some(l) = &self.linking {
            check_link("linking", l)?;
        }
        if let Some(o) = &self.omission {
            for (r, m) in o.rates.iter().zip(&o.points) {
                check_link(&format!("omission@{r}"), m)?;
            }
        }
        for row in self.length.iter().flatten() {
            unit(&format!("length@{}", row.neighbors), row.micro_f1)?;
        }
        if let Some(s) = &self.spatial {
            check_link("spatial.with", &s.with_spatial)?;
            check_link("spatial.without", &s.without_spatial)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        r.validate().map_err(|e| Error::Schema { path: path.to_path_buf(), detail: e.to_string() })?;
        Ok(r)
    }

    /// Flat tables: one row per class, per K, per rate or per count.
    pub fn csv_tables(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if let Some(t) = &self.typing {
            let mut s = String::from("seed,model,class,f1,support\n");
            let models = std::iter::once(("spatial", &t.model)).chain(t.baseline.as_ref().map(|b| ("name_baseline", b)));
            for (name, r) in models {
                for (c, f) in &r.per_class {
                    let _ = writeln!(s, "{},{name},{c},{f},{}", self.seed, r.support[c]);
                }
                let _ = writeln!(s, "{},{name},micro,{},{}", self.seed, r.micro_f1, t.n_test);
            }
            out.push(("typing.csv".into(), s));
        }
        if let Some(l) = &self.linking {
            out.push(("linking.csv".into(), link_rows(self.seed, "linking", l)));
        }
        if let Some(o) = &self.omission {
            let mut s = String::from("seed,rate,metric,value,elbow\n");
            for (r, m) in o.rates.iter().zip(&o.points) {
                let elbow = o.elbow == Some(*r);
                let _ = writeln!(s, "{},{r},mrr,{},{elbow}", self.seed, m.mrr);
                for (k, v) in &m.recall {
                    let _ = writeln!(s, "{},{r},recall@{k},{v},{elbow}", self.seed);
                }
            }
            out.push(("omission.csv".into(), s));
        }
        if let Some(rows) = &self.length {
            let mut s = String::from("seed,neighbors,micro_f1\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{}", self.seed, r.neighbors, r.micro_f1);
            }
            out.push(("length.csv".into(), s));
        }
        if let Some(sp) = &self.spatial {
            let mut s = link_rows(self.seed, "with_spatial", &sp.with_spatial);
            let without = link_rows(self.seed, "without_spatial", &sp.without_spatial);
            s.push_str(without.split_once('\n').map(|x| x.1).unwrap_or(""));
            out.push(("spatial.csv".into(), s));
        }
        out
    }

    /// Writes `report.json` and the CSV tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("report.json");
        fs::write(&p, self.to_json()).map_err(|e| Error::io(&p, e))?;
        for (name, body) in self.csv_tables() {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn link_rows(seed: u64, model: &str, m: &LinkMetrics) -> String {
    let mut s = String::from("seed,model,metric,value\n");
    let _ = writeln!(s, "{seed},{model},mrr,{}", m.mrr);
    for (k, v) in &m.recall {
        let _ = writeln!(s, "{seed},{model},recall@{k},{v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::rank_metrics;

    #[test]
    fn json_round_trip_and_schema() {
        let mut r = EvalReport::new("link", 7);
        r.linking = Some(rank_metrics(&[1, 2, 4], &[1, 5, 10]).unwrap());
        let back = EvalReport::from_json(&r.to_json(), Path::new("x")).unwrap();
        assert_eq!(back, r);
        assert!(back.to_json().contains("\"seed\": 7"));
        let bad = r.to_json().replacen("\"kind\"", "\"surprise\": 1, \"kind\"", 1);
        assert!(matches!(EvalReport::from_json(&bad, Path::new("x")), Err(Error::Schema { .. })));
    }

    #[test]
    fn out_of_range_metric_rejected() {
        let mut r = EvalReport::new("link", 0);
        let mut m = rank_metrics(&[1], &[1]).unwrap();
        m.mrr = 1.5;
        r.linking = Some(m);
        assert!(r.validate().is_err());
    }

    #[test]
    fn csv_has_row_per_k() {
        let mut r = EvalReport::new("link", 1);
        r.linking = Some(rank_metrics(&[1, 3], &[1, 5, 10]).unwrap());
        let t = r.csv_tables();
        assert_eq!(t[0].0, "linking.csv");
        assert_eq!(t[0].1.lines().count(), 5);
    }
}
