//! Batch runs over a directory of instance files with grouped averages.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use clap::Args;

use ipg_core::io::InstanceFile;
use ipg_core::kpg::Distribution;
use ipg_core::rational;
use ipg_core::report::{SolveReport, Status, CSV_HEADER};

use crate::{append_csv, instance_name, solve_file, ModeArg, RunFlags};

pub const SUMMARY_HEADER: [&str; 10] = [
    "group", "count", "#EI", "#EI_P", "#EI_D", "#It", "Time", "Time-1st", "PoS", "Tl",
];

#[derive(Args)]
pub struct BatchArgs {
    dir: PathBuf,
    #[command(flatten)]
    flags: RunFlags,
    /// Instances solved concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Group averages destination; standard output when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn group_key(path: &Path) -> String {
    match InstanceFile::load(path) {
        Ok(InstanceFile::Kpg(k)) => {
            let dist = match k.dist {
                Some(Distribution::A) => "A",
                Some(Distribution::B) => "B",
                Some(Distribution::C) => "C",
                None => "-",
            };
            format!("({}, {}, {dist})", k.n, k.m)
        }
        Ok(InstanceFile::Nfg(g)) => format!("({}, {})", g.v, g.e.len()),
        Ok(InstanceFile::Qipg(q)) => format!("qipg ({}, {})", q.n, q.m),
        Ok(InstanceFile::Cfld(c)) => format!("cfld ({}, {}, {})", c.n(), c.l, c.j),
        Ok(other) => other.kind().to_string(),
        Err(_) => "invalid".to_string(),
    }
}

fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn solve_all(files: &[PathBuf], flags: &RunFlags, jobs: usize) -> Vec<Result<SolveReport, String>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<SolveReport, String>>>> = files.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, files.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(path) = files.get(k) else { break };
                let out = solve_file(path, flags, ModeArg::Select).map_err(|e| format!("{e:#}"));
                *slots[k].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every instance was visited"))
        .collect()
}

#[derive(Default)]
struct Group {
    count: usize,
    done: usize,
    ei: f64,
    ei_p: f64,
    ei_d: f64,
    it: f64,
    time: f64,
    first: Vec<f64>,
    pos: Vec<f64>,
    timeouts: usize,
}

fn mean(v: &[f64]) -> String {
    if v.is_empty() {
        String::new()
    } else {
        format!("{:.4}", v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Averages run over the instances with a report, time-limit hits
/// included; failed instances count toward `count` only.
pub fn summarize(keys: &[String], reports: &[Result<SolveReport, String>]) -> Vec<Vec<String>> {
    let mut groups: BTreeMap<&str, Group> = BTreeMap::new();
    for (key, r) in keys.iter().zip(reports) {
        let g = groups.entry(key).or_default();
        g.count += 1;
        let Ok(r) = r else { continue };
        g.done += 1;
        let c = &r.counters;
        g.ei += c.ei as f64;
        g.ei_p += c.ei_payoff as f64;
        g.ei_d += c.ei_dominance as f64;
        g.it += c.iterations as f64;
        g.time += r.time_total;
        g.first.extend(r.time_first);
        g.pos.extend(r.pos.map(|p| rational::to_f64(&p)));
        g.timeouts += usize::from(r.status == Status::TimeLimit);
    }
    groups
        .into_iter()
        .map(|(key, g)| {
            let ok = g.done.max(1) as f64;
            vec![
                key.to_string(),
                g.count.to_string(),
                format!("{:.2}", g.ei / ok),
                format!("{:.2}", g.ei_p / ok),
                format!("{:.2}", g.ei_d / ok),
                format!("{:.2}", g.it / ok),
                format!("{:.4}", g.time / ok),
                mean(&g.first),
                mean(&g.pos),
                format!("{}/{}", g.timeouts, g.count),
            ]
        })
        .collect()
}

pub fn run(args: &BatchArgs) -> Result<u8> {
    args.flags.config(ModeArg::Select)?;
    let files = instance_files(&args.dir)?;
    let reports = solve_all(&files, &args.flags, args.jobs);
    let mut rows = Vec::new();
    for (path, r) in files.iter().zip(&reports) {
        let name = instance_name(path);
        match r {
            Ok(report) => rows.push(report.csv_row(&name)),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                let mut row = vec![String::new(); CSV_HEADER.len()];
                row[0] = name;
                row[1] = "ERROR".into();
                rows.push(row);
            }
        }
    }
    if let Some(csv) = &args.flags.csv {
        append_csv(csv, &CSV_HEADER, &rows)?;
    }
    let keys: Vec<String> = files.iter().map(|p| group_key(p)).collect();
    let summary = summarize(&keys, &reports);
    match &args.summary {
        Some(p) => {
            if p.exists() {
                fs::remove_file(p).with_context(|| format!("cannot replace {}", p.display()))?;
            }
            append_csv(p, &SUMMARY_HEADER, &summary)?;
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(SUMMARY_HEADER)?;
            for r in &summary {
                w.write_record(r)?;
            }
            w.flush()?;
        }
    }
    Ok(0)
}
