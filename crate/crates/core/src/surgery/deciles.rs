use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::models::ClassAccuracy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileRow {
    /// 0 is the weakest group.
    pub group: usize,
    pub classes: Vec<usize>,
    pub baseline_mean: f64,
    pub delta_mean: f64,
}

/// Groups classes into `groups` equal-count buckets by baseline accuracy
/// (ties broken by class index) and averages the accuracy change in each.
/// With fewer classes than groups, every class gets its own group.
pub fn decile_report(before: &ClassAccuracy, after: &ClassAccuracy, groups: usize) -> Result<Vec<DecileRow>> {
    check_dim(before.classes(), after.classes())?;
    let c = before.classes();
    let mut groups = groups.max(1);
    if c < groups {
        log::warn!("decile_report: {c} classes cannot fill {groups} groups, using {c}");
        groups = c;
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| before.per_class[a].total_cmp(&before.per_class[b]).then(a.cmp(&b)));
    Ok((0..groups)
        .map(|g| {
            let members = order[g * c / groups..(g + 1) * c / groups].to_vec();
            let n = members.len() as f64;
            let baseline_mean = members.iter().map(|&j| before.per_class[j]).sum::<f64>() / n;
            let delta_mean = members
                .iter()
                .map(|&j| after.per_class[j] - before.per_class[j])
                .sum::<f64>()
                / n;
            DecileRow {
                group: g,
                classes: members,
                baseline_mean,
                delta_mean,
            }
        })
        .collect())
}

pub fn decile_table(rows: &[DecileRow]) -> String {
    let mut s = String::from("# group baseline_mean delta_mean classes\n");
    for r in rows {
        let classes: Vec<String> = r.classes.iter().map(|c| c.to_string()).collect();
        s.push_str(&format!("{} {:.6} {:+.6} {}\n", r.group, r.baseline_mean, r.delta_mean, classes.join(",")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(values: &[f64]) -> ClassAccuracy {
        // 100 samples per class so the accuracies are exact counts
        let correct = values.iter().map(|v| (v * 100.0).round() as usize).collect();
        ClassAccuracy::from_counts(correct, vec![100; values.len()])
    }

    #[test]
    fn unchanged_gives_zero() {
        let a = acc(&[0.3, 0.5, 0.9, 0.7]);
        for r in decile_report(&a, &a, 2).unwrap() {
            assert_eq!(r.delta_mean, 0.0);
        }
    }

    #[test]
    fn two_groups_by_hand() {
        let before = acc(&[0.10, 0.90, 0.20, 0.80, 0.30, 0.70, 0.40, 0.60, 0.50, 0.95]);
        let after = acc(&[0.20, 0.85, 0.25, 0.80, 0.30, 0.60, 0.50, 0.60, 0.50, 0.90]);
        let rows = decile_report(&before, &after, 2).unwrap();
        assert_eq!(rows[0].classes, vec![0, 2, 4, 6, 8]);
        assert_eq!(rows[1].classes, vec![7, 5, 3, 1, 9]);
        // (0.10 + 0.05 + 0 + 0.10 + 0) / 5 and (0 − 0.10 + 0 − 0.05 − 0.05) / 5
        assert!((rows[0].delta_mean - 0.05).abs() < 1e-12);
        assert!((rows[1].delta_mean + 0.04).abs() < 1e-12);
        assert!(rows[0].delta_mean > 0.0 && rows[1].delta_mean < 0.0);
    }

    #[test]
    fn too_few_classes_collapse() {
        let a = acc(&[0.3, 0.5, 0.9]);
        let rows = decile_report(&a, &a, 10).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.classes.len() == 1));
    }
}
