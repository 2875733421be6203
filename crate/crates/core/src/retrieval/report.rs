use std::fmt::Write as _;

use super::eval::EvalReport;
use crate::error::{Error, Result};
use crate::synthbank::Family;

fn families_of(reports: &[EvalReport]) -> Result<(Vec<usize>, Vec<Family>)> {
    let first = reports.first().ok_or_else(|| Error::invalid("no reports"))?;
    let mut families: Vec<Family> = Vec::new();
    for r in reports {
        if r.ks != first.ks {
            return Err(Error::invalid("reports use different k values"));
        }
        for f in &r.per_family {
            if !families.contains(&f.family) {
                families.push(f.family);
            }
        }
    }
    families.sort_by_key(|f| f.index());
    Ok((first.ks.clone(), families))
}

/// One row per method: `method, top1, top5, <family>_top1, ...`.
/// Accuracies are fractions printed in shortest round-trip form.
pub fn reports_to_csv(reports: &[EvalReport], config_hash: &str) -> Result<String> {
    let (ks, families) = families_of(reports)?;
    let mut out = format!("# config_hash: {config_hash}\nmethod");
    for k in &ks {
        write!(out, ",top{k}").unwrap();
    }
    for f in &families {
        for k in &ks {
            write!(out, ",{f}_top{k}").unwrap();
        }
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.method);
        for a in &r.average {
            write!(out, ",{a}").unwrap();
        }
        for f in &families {
            let fa = r.per_family.iter().find(|x| x.family == *f);
            for j in 0..ks.len() {
                match fa {
                    Some(fa) => write!(out, ",{}", fa.accuracy[j]).unwrap(),
                    None => out.push(','),
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Percent table with the average first, then every family.
pub fn reports_to_markdown(reports: &[EvalReport], title: &str, config_hash: &str) -> Result<String> {
    let (ks, families) = families_of(reports)?;
    let mut out = format!("## {title}\n\nconfig hash `{config_hash}`\n\n| method |");
    let mut rule = String::from("|---|");
    for k in &ks {
        write!(out, " top-{k} |").unwrap();
        rule.push_str("---:|");
    }
    for f in &families {
        for k in &ks {
            write!(out, " {f} top-{k} |").unwrap();
            rule.push_str("---:|");
        }
    }
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for r in reports {
        write!(out, "| {} |", r.method).unwrap();
        for a in &r.average {
            write!(out, " {:.1} |", 100.0 * a).unwrap();
        }
        for f in &families {
            let fa = r.per_family.iter().find(|x| x.family == *f);
            for j in 0..ks.len() {
                match fa {
                    Some(fa) => write!(out, " {:.1} |", 100.0 * fa.accuracy[j]).unwrap(),
                    None => out.push_str(" - |"),
                }
            }
        }
        out.push('\n');
    }
    let n = reports.iter().map(|r| r.queries).max().unwrap_or(0);
    writeln!(out, "\n{n} queries per method.").unwrap();
    Ok(out)
}
