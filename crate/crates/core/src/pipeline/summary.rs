//! Per-stage run accounting.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub stage: String,
    pub input: usize,
    pub success: usize,
    pub failed: usize,
    pub skipped: usize,
}

impl StageCounts {
    pub fn new(stage: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            input: 0,
            success: 0,
            failed: 0,
            skipped: 0,
        }
    }

    /// Holds for every completed (non-interrupted) stage.
    pub fn reconciles(&self) -> bool {
        self.input == self.success + self.failed + self.skipped
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stages: Vec<StageCounts>,
    /// True when the run stopped early on a cancellation signal.
    pub interrupted: bool,
}

impl RunSummary {
    pub fn total_failed(&self) -> usize {
        self.stages.iter().map(|s| s.failed).sum()
    }

    pub fn is_full_success(&self) -> bool {
        !self.interrupted && self.total_failed() == 0
    }

    /// Fixed-width table with a stable column order.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8} {:>8}\n",
            "stage", "input", "success", "failed", "skipped"
        ));
        for s in &self.stages {
            out.push_str(&format!(
                "{:<10} {:>8} {:>8} {:>8} {:>8}\n",
                s.stage, s.input, s.success, s.failed, s.skipped
            ));
        }
        if self.interrupted {
            out.push_str("(run interrupted; resume with the same output directory)\n");
        }
        out
    }
}
