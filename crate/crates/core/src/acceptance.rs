//! Validation suite: each criterion bundles its checks into one report.

/// Scale of a suite run: Full uses the stated replication counts, Smoke
/// divides them for a quick end-to-end pass (statistical bounds re-derive
/// their widths from the actual replication counts, so checks stay valid).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Smoke,
    Full,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

pub fn run_suite(_suite: Suite, _master_seed: u64, _filter: Option<&[usize]>) -> Vec<CriterionReport> {
    Vec::new()
}
