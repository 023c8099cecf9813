//! Dataset card for a generated run.

use std::fmt::Write as _;

use crate::config::RunManifest;

pub const SCOPE_DISCLAIMER: &str = "Labels are simulated risk states, not clinical diagnoses.";

/// Thousands separators: `200000` becomes `200,000`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn render_card(m: &RunManifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Dataset card\n");
    let _ = writeln!(s, "{SCOPE_DISCLAIMER} The data are synthetic and carry no information about real people.\n");
    if let Some(c) = &m.cohort {
        let _ = writeln!(s, "## Simulated cohort\n");
        let _ = writeln!(s, "- Config digest: `{}`", c.digest);
        let _ = writeln!(
            s,
            "- {} interaction records ({} users x {} days x {} videos per day)",
            group_thousands(c.interaction_records),
            c.n_users,
            c.horizon_days,
            c.videos_per_day
        );
        let _ = writeln!(s, "- {} hidden-label rows, stored in a separate file", group_thousands(c.hidden_label_rows));
        let _ = writeln!(s, "- Text generation mode: {}", c.mode);
        let _ = writeln!(s, "- Per-sample component sd: {}\n", c.per_sample_sd);
        let _ = writeln!(s, "### Generation rules\n");
        let t = &c.transitions;
        let gaps: Vec<String> = t.gaps.iter().map(|g| format!("U{{{}..{}}}", g.lo, g.hi)).collect();
        let _ = writeln!(
            s,
            "- Each user moves through Healthy, MCI, EarlyAD, ModAD and SevAD on ordered transition days; \
             MCI onset is drawn from U{{{}..{}}} and the later gaps from {}.",
            t.onset.lo,
            t.onset.hi,
            gaps.join(", ")
        );
        let _ = writeln!(
            s,
            "- Each day yields one record per video with behavioral metrics drawn from state-specific priors."
        );
        let _ = writeln!(
            s,
            "- Coherence is 0.4 accuracy + 0.2 exp(-latency/60) + 0.2 (1 - skip rate) + 0.2 consistency; drift is 1 - coherence."
        );
        let _ = writeln!(
            s,
            "- In no-label mode the title and summary text are independent of the hidden state."
        );
        let _ = writeln!(
            s,
            "- Every random draw comes from a stream keyed by seed, stage and user or day, so files are reproducible byte for byte.\n"
        );
        if !c.splits.is_empty() {
            let _ = writeln!(s, "### Challenge splits\n");
            let _ = writeln!(s, "| split | file | train users | test users | dropped sessions |");
            let _ = writeln!(s, "|---|---|---|---|---|");
            for sp in &c.splits {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    sp.kind.name(),
                    sp.file,
                    sp.n_train_users,
                    sp.n_test_users,
                    sp.n_dropped_sessions
                );
            }
            let _ = writeln!(s);
        }
    }
    if let Some(d) = &m.deployment {
        let _ = writeln!(s, "## Deployment sessions\n");
        let _ = writeln!(s, "- Config digest: `{}`", d.digest);
        let _ = writeln!(
            s,
            "- {} sessions ({} per learner-status profile), {} question records",
            group_thousands(d.sessions as usize),
            d.sessions_per_profile,
            group_thousands(d.questions)
        );
        let _ = writeln!(s, "- Centroid overlap noise: {}", d.overlap_noise);
        let _ = writeln!(s, "- Flipped answers: {}", d.flipped_answers);
        let _ = writeln!(s, "- Expected statuses are stored in a separate file.\n");
    }
    if m.cohort.is_none() && m.deployment.is_none() {
        let _ = writeln!(s, "No generated data found.");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CohortSummary, SplitSummary};
    use crate::splits::SplitKind;

    #[test]
    fn thousands() {
        assert_eq!(group_thousands(200_000), "200,000");
        assert_eq!(group_thousands(5_040), "5,040");
        assert_eq!(group_thousands(999), "999");
        assert_eq!(group_thousands(1_000_000), "1,000,000");
    }

    #[test]
    fn card_lists_counts_digest_and_splits() {
        let kinds = [
            SplitKind::NoiseShift,
            SplitKind::SparseObservation,
            SplitKind::DelayedEvidence,
            SplitKind::ProfileGeneralization,
        ];
        let m = RunManifest {
            cohort: Some(CohortSummary {
                digest: "0123abcd".into(),
                n_users: 200,
                horizon_days: 200,
                videos_per_day: 5,
                mode: "no-label".into(),
                per_sample_sd: 0.15,
                transitions: Default::default(),
                interaction_records: 200_000,
                hidden_label_rows: 40_000,
                splits: kinds
                    .iter()
                    .map(|&kind| SplitSummary {
                        kind,
                        file: format!("splits/{}.csv", kind.name()),
                        n_train_users: 140,
                        n_test_users: 60,
                        n_dropped_sessions: 0,
                    })
                    .collect(),
            }),
            deployment: None,
        };
        let card = render_card(&m);
        assert!(card.contains("200,000 interaction records"));
        assert!(card.contains("0123abcd"));
        assert!(card.contains("U{30..90}"));
        assert!(card.contains("simulated risk states, not clinical diagnoses"));
        for k in kinds {
            assert!(card.contains(k.name()));
        }
    }
}
