//! Parameter sweeps: one experiment per grid point plus a manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::{ensure_unique, execute, missing, out_dir, to_json, write_atomic, Extras, SimArgs, Written};

/// Parameters a sweep may vary, in file-name order.
pub const SWEEP_KEYS: [&str; 5] = ["eta1", "eta2", "eta3", "rho", "epsilon"];

#[derive(Debug)]
pub struct GridError(pub String);

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for GridError {}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Axis of the cartesian grid, `key=v1,v2,...`. Repeatable.
    #[arg(long = "grid")]
    axes: Vec<String>,
    /// Explicit combination, `key=v,key=v`. Repeatable; each is crossed with the grid.
    #[arg(long = "point")]
    points: Vec<String>,
    /// TOML file with axis arrays (`rho = [0.4, 0.8]`) and `[[point]]` tables.
    #[arg(long)]
    grid_file: Option<PathBuf>,
    #[arg(long)]
    per_replication: bool,
    #[arg(long)]
    dump_state: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    eta1: Option<Vec<f64>>,
    eta2: Option<Vec<f64>>,
    eta3: Option<Vec<f64>>,
    rho: Option<Vec<f64>>,
    epsilon: Option<Vec<f64>>,
    #[serde(default)]
    point: Vec<BTreeMap<String, f64>>,
}

type Point = Vec<(&'static str, f64)>;

fn key(name: &str) -> anyhow::Result<&'static str> {
    SWEEP_KEYS
        .iter()
        .find(|k| **k == name)
        .copied()
        .ok_or_else(|| missing(&format!("{name:?} cannot be swept; use one of {}", SWEEP_KEYS.join(", "))))
}

fn number(s: &str) -> anyhow::Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| missing(&format!("{s:?} is not a number")))
}

fn parse_axis(spec: &str) -> anyhow::Result<(&'static str, Vec<f64>)> {
    let (k, values) = spec
        .split_once('=')
        .ok_or_else(|| missing(&format!("grid axis {spec:?} is not key=v1,v2")))?;
    let values = values
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(number)
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((key(k.trim())?, values))
}

fn parse_point(spec: &str) -> anyhow::Result<Point> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| missing(&format!("point entry {kv:?} is not key=value")))?;
            Ok((key(k.trim())?, number(v)?))
        })
        .collect()
}

fn canonical(mut p: Point) -> Point {
    p.sort_by_key(|(k, _)| SWEEP_KEYS.iter().position(|s| s == k));
    p
}

/// Expands axes and explicit points into the list of grid points.
fn expand(axes: Vec<(&'static str, Vec<f64>)>, points: Vec<Point>) -> anyhow::Result<Vec<Point>> {
    let mut grid: Vec<Point> = vec![Vec::new()];
    for (k, values) in &axes {
        if values.is_empty() {
            return Err(missing(&format!("grid axis {k} has no values")));
        }
        grid = grid
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.retain(|(key, _)| key != k);
                    q.push((*k, *v));
                    q
                })
            })
            .collect();
    }
    if axes.is_empty() && points.is_empty() {
        return Err(missing("empty grid: give --grid, --point or --grid-file"));
    }
    if !points.is_empty() {
        grid = grid
            .into_iter()
            .flat_map(|base| {
                points.iter().map(move |p| {
                    let mut q = base.clone();
                    q.retain(|(k, _)| !p.iter().any(|(pk, _)| pk == k));
                    q.extend(p.iter().copied());
                    q
                })
            })
            .collect();
    }
    Ok(grid.into_iter().map(canonical).collect())
}

fn point_name(p: &Point) -> String {
    p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("_")
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    params: BTreeMap<&'static str, f64>,
    #[serde(flatten)]
    files: Written,
}

#[derive(Serialize)]
struct Manifest {
    points: Vec<ManifestEntry>,
}

pub fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut axes = args.axes.iter().map(|s| parse_axis(s)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut points = args.points.iter().map(|s| parse_point(s)).collect::<anyhow::Result<Vec<_>>>()?;
    if let Some(path) = &args.grid_file {
        let text = fs::read_to_string(path).map_err(|e| missing(&format!("cannot read {}: {e}", path.display())))?;
        let file: GridFile = toml::from_str(&text).map_err(|e| missing(&e.to_string()))?;
        for (k, v) in [
            ("eta1", file.eta1),
            ("eta2", file.eta2),
            ("eta3", file.eta3),
            ("rho", file.rho),
            ("epsilon", file.epsilon),
        ] {
            if let Some(v) = v {
                axes.push((key(k)?, v));
            }
        }
        for p in file.point {
            points.push(p.iter().map(|(k, v)| Ok((key(k)?, *v))).collect::<anyhow::Result<Point>>()?);
        }
    }
    let grid = expand(axes, points)?;
    let names: Vec<String> = grid.iter().map(point_name).collect();
    ensure_unique(&names)?;

    let merged = args.sim.merged()?;
    // resolve every point before running anything
    let resolved = grid
        .iter()
        .map(|p| {
            let mut cfg = merged.clone();
            for (k, v) in p {
                let slot = match *k {
                    "eta1" => &mut cfg.eta1,
                    "eta2" => &mut cfg.eta2,
                    "eta3" => &mut cfg.eta3,
                    "rho" => &mut cfg.rho,
                    _ => &mut cfg.epsilon,
                };
                *slot = Some(*v);
            }
            cfg.resolve()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let dir = out_dir(&merged);
    let extras = Extras {
        per_replication: args.per_replication,
        dump_state: args.dump_state,
    };
    let mut manifest = Manifest { points: Vec::new() };
    for ((point, name), (sim, effective)) in grid.iter().zip(&names).zip(resolved) {
        let files = execute(sim, &effective, args.sim.jobs, &dir, name, &extras)?;
        println!("{}", files.csv.display());
        manifest.points.push(ManifestEntry {
            name: name.clone(),
            params: point.iter().copied().collect(),
            files,
        });
    }
    let path = dir.join("manifest.json");
    write_atomic(&path, &to_json(&manifest)?)?;
    println!("{}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_axes() {
        let grid = expand(
            vec![parse_axis("rho=0.4,0.8").unwrap(), parse_axis("eta1=0.001,0.01").unwrap()],
            Vec::new(),
        )
        .unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(point_name(&grid[0]), "eta1=0.001_rho=0.4");
    }

    #[test]
    fn points_cross_axes() {
        let grid = expand(
            vec![parse_axis("rho=0.8").unwrap(), parse_axis("epsilon=0.1").unwrap()],
            vec![
                parse_point("eta1=0.001,eta2=0.9,eta3=0.001").unwrap(),
                parse_point("eta1=0.01,eta2=0.6,eta3=0.01").unwrap(),
            ],
        )
        .unwrap();
        let names: Vec<String> = grid.iter().map(point_name).collect();
        assert_eq!(
            names,
            vec![
                "eta1=0.001_eta2=0.9_eta3=0.001_rho=0.8_epsilon=0.1",
                "eta1=0.01_eta2=0.6_eta3=0.01_rho=0.8_epsilon=0.1"
            ]
        );
    }

    #[test]
    fn empty_grids_are_rejected() {
        assert!(expand(Vec::new(), Vec::new()).is_err());
        assert!(expand(vec![parse_axis("rho=").unwrap()], Vec::new()).is_err());
        assert!(parse_axis("seed=1,2").is_err());
        assert!(parse_point("rho").is_err());
    }
}
