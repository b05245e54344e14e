//! The five command drivers. Each builds its artifacts through a [`Sink`]
//! and finishes with a manifest.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use rayon::prelude::*;

use nehari_core::{
    applicable_transforms, assemble, classify, continuation, eigs, extract_contours, ground_state,
    least_energy_nodal, render_svg, sample, Field, Grid, Operator, ProblemParams, SolveMode,
    SolveResult, Spectrum, SymmetryReport,
};

use crate::artifacts::{
    solution_summary, spectrum_summary, Manifest, Sink, Stopwatch,
};
use crate::config::{preset, preset_names, resolve, ConfigError, Lambda, Mode, Plan, RawConfig};

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Grid, potential and operator shared by every command.
struct Setup {
    grid: Arc<Grid>,
    potential: Field,
    op: Operator,
    substitutions: usize,
}

fn setup(plan: &Plan) -> Result<Setup> {
    let grid = nehari_core::build_grid(plan.domain, plan.resolution)?;
    let sampled = sample(&plan.potential, &grid, plan.regularization)?;
    let op = assemble(&grid, &sampled.field)?;
    Ok(Setup {
        grid,
        substitutions: sampled.substitutions.len(),
        potential: sampled.field,
        op,
    })
}

fn resolve_lambda(plan: &Plan, spec: &Spectrum) -> Result<f64> {
    match plan.lambda {
        Lambda::Fixed(v) => Ok(v),
        Lambda::Eigenvalue(i) => {
            if i >= spec.clusters().len() {
                return Err(config_err(format!(
                    "lambda auto index {} exceeds the {} computed clusters",
                    i + 1,
                    spec.clusters().len()
                )));
            }
            Ok(spec.eigenvalue(i))
        }
    }
}

fn spectrum_for(plan: &Plan, setup: &Setup) -> Result<Spectrum> {
    let k = match plan.lambda {
        Lambda::Eigenvalue(i) => plan.eigenpairs.max(i + 1),
        Lambda::Fixed(_) => plan.eigenpairs,
    }
    .max(plan.cluster + 1);
    Ok(eigs(&setup.op, k, plan.eig_tol, plan.eig_max_iter)?)
}

/// Report contour levels: 1 and 2 for one-signed solutions, the nodal
/// line plus ±1 and ±2 for sign-changing ones, clipped to levels the
/// field actually attains; an explicit `levels` wins.
fn levels_for(plan: &Plan, u: &Field) -> Vec<f64> {
    if let Some(levels) = &plan.levels {
        return levels.clone();
    }
    let (min, max) = (u.min(), u.max());
    let mut levels: Vec<f64> = if min < 0.0 && max > 0.0 {
        vec![-2.0, -1.0, 0.0, 1.0, 2.0]
    } else {
        vec![1.0, 2.0]
    };
    levels.retain(|l| *l > min && *l < max || *l == 0.0 && min < 0.0 && max > 0.0);
    if levels.is_empty() {
        levels = nehari_core::default_levels(u, 2);
    }
    levels
}

fn mode_allows(config_mode: Option<Mode>, allowed: &[Mode]) -> Result<()> {
    match config_mode {
        None => Ok(()),
        Some(m) if allowed.contains(&m) => Ok(()),
        Some(m) => Err(config_err(format!(
            "config mode {m:?} does not apply to this command"
        ))),
    }
}

pub fn run_eigs(plan: &Plan, out: &Path, quiet: bool) -> Result<()> {
    mode_allows(plan.mode, &[Mode::Eigs])?;
    let mut sink = Sink::new(out, quiet)?;
    let mut manifest = Manifest::new("eigs", &plan.config_echo, plan.resolution);
    let mut watch = Stopwatch::start();

    let setup = setup(plan)?;
    manifest.timings_ms.insert("setup".into(), watch.lap());
    let spec = spectrum_for(plan, &setup)?;
    manifest.timings_ms.insert("eigs".into(), watch.lap());

    let summary = spectrum_summary(&spec);
    if !quiet {
        for (i, c) in summary.clusters.iter().enumerate() {
            println!(
                "lambda_{} = {:.9} (multiplicity {})",
                i + 1,
                c.eigenvalue,
                c.multiplicity
            );
        }
    }
    sink.write_json("spectrum.json", &summary)?;
    manifest.spectrum = Some(summary);
    if let Lambda::Fixed(v) = plan.lambda {
        manifest.lambda = v;
    } else {
        manifest.lambda = resolve_lambda(plan, &spec)?;
    }
    manifest.finish(&mut sink)
}

struct Solved {
    label: &'static str,
    result: SolveResult,
    report: SymmetryReport,
}

/// Solve whatever `plan` asks for (ground state, nodal, or both) and
/// write fields, contours, spectrum and symmetry reports. Shared by
/// `solve` and per-preset reproduction.
fn solve_pipeline(plan: &Plan, sink: &mut Sink, manifest: &mut Manifest, quiet: bool) -> Result<Vec<Solved>> {
    let mut watch = Stopwatch::start();
    let setup = setup(plan)?;
    if setup.substitutions > 0 && !quiet {
        eprintln!(
            "potential sampled with {} regularized node(s)",
            setup.substitutions
        );
    }
    manifest.timings_ms.insert("setup".into(), watch.lap());

    let spec = spectrum_for(plan, &setup)?;
    manifest.timings_ms.insert("eigs".into(), watch.lap());
    let lambda = resolve_lambda(plan, &spec)?;
    manifest.lambda = lambda;
    let params = ProblemParams::new(plan.p, lambda)?;

    let want_gs = plan.mode != Some(Mode::Lens);
    let want_lens = plan.mode != Some(Mode::Gs);
    let transforms = applicable_transforms(&setup.grid, &setup.potential)?;
    let mut out = Vec::new();

    if want_gs {
        let Some(seed) = &plan.seed_gs else {
            return Err(config_err("ground state requested but seed_gs is missing"));
        };
        let seed = sample(seed, &setup.grid, plan.regularization)?.field;
        let result = ground_state(&setup.op, &params, &seed, &plan.gs_cfg)?;
        manifest.timings_ms.insert("solve_gs".into(), watch.lap());
        sink.write_field("field_gs.csv", &result.field)?;
        let contours = extract_contours(&result.field, &levels_for(plan, &result.field));
        sink.write(
            "contours_gs.svg",
            render_svg(&plan.domain, &contours).as_bytes(),
        )?;
        let report = classify(&setup.op, &result.field, &transforms, plan.symmetry_threshold)?;
        out.push(Solved {
            label: "gs",
            result,
            report,
        });
    }
    if want_lens {
        let Some(seed) = &plan.seed_lens else {
            return Err(config_err("nodal solution requested but seed_lens is missing"));
        };
        let seed = sample(seed, &setup.grid, plan.regularization)?.field;
        let result = least_energy_nodal(&setup.op, &params, &seed, &plan.lens_cfg)?;
        manifest.timings_ms.insert("solve_lens".into(), watch.lap());
        sink.write_field("field_lens.csv", &result.field)?;
        let contours = extract_contours(&result.field, &levels_for(plan, &result.field));
        sink.write(
            "contours_lens.svg",
            render_svg(&plan.domain, &contours).as_bytes(),
        )?;
        let report = classify(&setup.op, &result.field, &transforms, plan.symmetry_threshold)?;
        out.push(Solved {
            label: "lens",
            result,
            report,
        });
    }

    sink.write_json("spectrum.json", &spectrum_summary(&spec))?;
    manifest.spectrum = Some(spectrum_summary(&spec));

    let mut symmetry = BTreeMap::new();
    for s in &out {
        manifest
            .solutions
            .insert(s.label.to_string(), solution_summary(&s.result));
        manifest
            .symmetry
            .insert(s.label.to_string(), s.report.clone());
        symmetry.insert(s.label.to_string(), &s.report);
    }
    sink.write_json("symmetry.json", &symmetry)?;
    manifest.timings_ms.insert("reports".into(), watch.lap());

    if !quiet {
        for s in &out {
            println!(
                "{}: energy {:.6}, range [{:.6}, {:.6}], {} iterations, morse {:?}",
                s.label,
                s.result.energy,
                s.result.field.min(),
                s.result.field.max(),
                s.result.iterations,
                s.result.morse_index
            );
        }
    }
    Ok(out)
}

pub fn run_solve(plan: &Plan, out: &Path, quiet: bool) -> Result<()> {
    mode_allows(plan.mode, &[Mode::Gs, Mode::Lens])?;
    let mut sink = Sink::new(out, quiet)?;
    let mut manifest = Manifest::new("solve", &plan.config_echo, plan.resolution);
    solve_pipeline(plan, &mut sink, &mut manifest, quiet)?;
    manifest.finish(&mut sink)
}

pub fn run_continuation(plan: &Plan, out: &Path, quiet: bool) -> Result<()> {
    mode_allows(plan.mode, &[Mode::Gs, Mode::Lens, Mode::Continuation])?;
    let mut sink = Sink::new(out, quiet)?;
    let mut manifest = Manifest::new("continuation", &plan.config_echo, plan.resolution);
    let mut watch = Stopwatch::start();

    let setup = setup(plan)?;
    manifest.timings_ms.insert("setup".into(), watch.lap());
    let spec = spectrum_for(plan, &setup)?;
    manifest.timings_ms.insert("eigs".into(), watch.lap());
    let lambda = resolve_lambda(plan, &spec)?;
    manifest.lambda = lambda;

    let (mode, cfg, field_name) = match plan.mode {
        Some(Mode::Lens) => (SolveMode::Nodal, &plan.lens_cfg, "field_lens.csv"),
        _ => (SolveMode::GroundState, &plan.gs_cfg, "field_gs.csv"),
    };
    let run = continuation(
        &setup.op,
        &spec,
        plan.cluster,
        mode,
        lambda,
        &plan.p_list,
        cfg,
    )?;
    manifest.timings_ms.insert("continuation".into(), watch.lap());

    let mut csv = String::from(
        "p,energy,iterations,grad_rel,morse_index,h_norm,rescaled_h_norm,limit_distance_rel\n",
    );
    for s in &run.steps {
        let morse = s
            .morse_index
            .map(|m| m.to_string())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.p,
            s.energy,
            s.iterations,
            s.grad_rel,
            morse,
            s.h_norm,
            s.rescaled_h_norm,
            s.limit_distance_rel
        ));
        if !quiet {
            println!(
                "p = {:<6} rescaled ||u||_H = {:.6}  distance to limit = {:.3e}",
                s.p, s.rescaled_h_norm, s.limit_distance_rel
            );
        }
    }
    sink.write("continuation.csv", csv.as_bytes())?;
    if let Some(last) = run.steps.last() {
        sink.write_field(field_name, &last.field)?;
    }
    sink.write_json("spectrum.json", &spectrum_summary(&spec))?;
    manifest.spectrum = Some(spectrum_summary(&spec));
    manifest.finish(&mut sink)
}

pub fn run_symmetry(plan: &Plan, out: &Path, quiet: bool) -> Result<()> {
    mode_allows(plan.mode, &[Mode::Symmetry])?;
    let Some(csv_path) = &plan.field_csv else {
        return Err(config_err("symmetry mode needs field_csv"));
    };
    let mut sink = Sink::new(out, quiet)?;
    let mut manifest = Manifest::new("symmetry", &plan.config_echo, plan.resolution);
    let mut watch = Stopwatch::start();

    let setup = setup(plan)?;
    let file = std::fs::File::open(csv_path)
        .map_err(|e| config_err(format!("cannot open {}: {e}", csv_path.display())))?;
    let field = nehari_core::read_field_csv(&setup.grid, std::io::BufReader::new(file))?;
    manifest.timings_ms.insert("setup".into(), watch.lap());

    let transforms = applicable_transforms(&setup.grid, &setup.potential)?;
    let report = classify(&setup.op, &field, &transforms, plan.symmetry_threshold)?;
    manifest.timings_ms.insert("classify".into(), watch.lap());
    if !quiet {
        for s in &report.scores {
            println!(
                "{}: parity {:?} (even defect {:.3e}, odd defect {:.3e})",
                s.transform, s.parity, s.even_defect, s.odd_defect
            );
        }
    }
    sink.write_json("symmetry.json", &report)?;
    if let Lambda::Fixed(v) = plan.lambda {
        manifest.lambda = v;
    }
    manifest.symmetry.insert("field".into(), report);
    manifest.finish(&mut sink)
}

fn pct(computed: f64, reference: f64) -> f64 {
    100.0 * (computed - reference) / reference.abs()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn symmetry_string(report: &SymmetryReport) -> String {
    report
        .scores
        .iter()
        .map(|s| format!("{}={:?}", s.transform, s.parity).to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

struct TableRow {
    preset: String,
    solution: &'static str,
    cells: Vec<String>,
    status: &'static str,
}

fn row_line(row: &TableRow) -> String {
    let mut line = format!("{},{}", row.preset, row.solution);
    for c in &row.cells {
        line.push(',');
        line.push_str(c);
    }
    line.push(',');
    line.push_str(row.status);
    line.push('\n');
    line
}

fn preset_rows(name: &str, resolution: u32, quiet: bool, out_root: &Path) -> Vec<TableRow> {
    let failed = |msg: String| -> Vec<TableRow> {
        eprintln!("preset {name}: {msg}");
        ["gs", "lens"]
            .iter()
            .map(|solution| TableRow {
                preset: name.to_string(),
                solution,
                cells: vec![String::new(); 11],
                status: "FAILED",
            })
            .collect()
    };

    let raw = preset(name).expect("preset names are fixed");
    let plan = match resolve(raw, Some(resolution)) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let reference = plan.reference.expect("presets carry references");
    let mut sink = match Sink::new(&out_root.join(name), quiet) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let mut manifest = Manifest::new("solve", &plan.config_echo, plan.resolution);
    let solved = match solve_pipeline(&plan, &mut sink, &mut manifest, quiet) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    if let Err(e) = manifest.finish(&mut sink) {
        return failed(e.to_string());
    }

    solved
        .iter()
        .map(|s| {
            let (min, max) = (s.result.field.min(), s.result.field.max());
            let (ref_max, ref_min, ref_energy) = match s.label {
                "gs" => (reference.gs_max, None, reference.gs_energy),
                _ => (
                    reference.lens_max,
                    Some(reference.lens_min),
                    reference.lens_energy,
                ),
            };
            let cells = vec![
                format!("{max:.4}"),
                format!("{ref_max:.4}"),
                format!("{:+.2}", pct(max, ref_max)),
                format!("{min:.4}"),
                fmt_opt(ref_min),
                ref_min
                    .map(|r| format!("{:+.2}", pct(min, r)))
                    .unwrap_or_default(),
                format!("{:.4}", s.result.energy),
                format!("{ref_energy:.4}"),
                format!("{:+.2}", pct(s.result.energy, ref_energy)),
                s.result
                    .morse_index
                    .map(|m| m.to_string())
                    .unwrap_or_default(),
                symmetry_string(&s.report),
            ];
            TableRow {
                preset: name.to_string(),
                solution: if s.label == "gs" { "gs" } else { "lens" },
                cells,
                status: "ok",
            }
        })
        .collect()
}

/// The reproduction config is allowed to be nearly empty — only `mode`,
/// `resolution` and `out_dir` are meaningful, everything else is pinned
/// by the presets themselves — so it skips full plan resolution.
pub fn run_reproduce_from_file(
    config_path: &Path,
    cli_resolution: Option<u32>,
    out: &Path,
    quiet: bool,
) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", config_path.display())))?;
    let raw: RawConfig = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", config_path.display())))?;
    mode_allows(raw.mode, &[Mode::Reproduce])?;
    let resolution = cli_resolution
        .or(raw.resolution)
        .unwrap_or(crate::config::DEFAULT_RESOLUTION);
    if resolution == 0 {
        return Err(config_err("resolution must be positive"));
    }
    let echo = serde_json::to_value(&raw)?;

    let mut sink = Sink::new(out, quiet)?;
    let mut manifest = Manifest::new("reproduce", &echo, resolution);
    let mut watch = Stopwatch::start();

    let names = preset_names();
    let rows: Vec<Vec<TableRow>> = names
        .par_iter()
        .map(|name| preset_rows(name, resolution, quiet, out))
        .collect();
    manifest.timings_ms.insert("presets".into(), watch.lap());

    let mut csv = String::from(
        "preset,solution,max,ref_max,dev_max_pct,min,ref_min,dev_min_pct,\
         energy,ref_energy,dev_energy_pct,morse_index,symmetry,status\n",
    );
    let mut any_failed = false;
    for row in rows.iter().flatten() {
        any_failed |= row.status == "FAILED";
        csv.push_str(&row_line(row));
    }
    sink.write("reproduce_table.csv", csv.as_bytes())?;
    if !quiet {
        print!("{csv}");
    }
    manifest.finish(&mut sink)?;
    if any_failed {
        anyhow::bail!("one or more presets failed; see reproduce_table.csv");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn tiny_plan(extra: impl FnOnce(&mut RawConfig)) -> Plan {
        let mut raw = RawConfig {
            preset: Some("square-negconst".into()),
            resolution: Some(10),
            ..RawConfig::default()
        };
        extra(&mut raw);
        resolve(raw, None).unwrap()
    }

    #[test]
    fn solve_writes_the_full_artifact_set() {
        let dir = tempfile::tempdir().unwrap();
        let plan = tiny_plan(|_| {});
        run_solve(&plan, dir.path(), true).unwrap();
        for name in [
            "manifest.json",
            "field_gs.csv",
            "field_lens.csv",
            "contours_gs.svg",
            "contours_lens.svg",
            "spectrum.json",
            "symmetry.json",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["tool"], "nehari-forge");
        assert!(manifest["artifacts"]["field_gs.csv"].is_string());
        assert!(manifest["solutions"]["gs"]["energy"].is_number());
        assert_eq!(manifest["spectrum"]["unique_principal"], true);
    }

    #[test]
    fn gs_only_mode_skips_the_nodal_files() {
        let dir = tempfile::tempdir().unwrap();
        let plan = tiny_plan(|raw| raw.mode = Some(Mode::Gs));
        run_solve(&plan, dir.path(), true).unwrap();
        assert!(dir.path().join("field_gs.csv").exists());
        assert!(!dir.path().join("field_lens.csv").exists());
    }

    #[test]
    fn eigs_writes_spectrum() {
        let dir = tempfile::tempdir().unwrap();
        let plan = tiny_plan(|raw| raw.mode = Some(Mode::Eigs));
        run_eigs(&plan, dir.path(), true).unwrap();
        let spec: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectrum.json")).unwrap())
                .unwrap();
        assert!(spec["clusters"].as_array().unwrap().len() >= 2);
    }

    #[test]
    fn symmetry_mode_round_trips_a_field() {
        let dir = tempfile::tempdir().unwrap();
        let plan = tiny_plan(|raw| raw.mode = Some(Mode::Gs));
        run_solve(&plan, dir.path(), true).unwrap();

        let out2 = tempfile::tempdir().unwrap();
        let plan = tiny_plan(|raw| {
            raw.mode = Some(Mode::Symmetry);
            raw.field_csv = Some(dir.path().join("field_gs.csv"));
        });
        run_symmetry(&plan, out2.path(), true).unwrap();
        let rep: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out2.path().join("symmetry.json")).unwrap(),
        )
        .unwrap();
        for score in rep["scores"].as_array().unwrap() {
            assert_eq!(score["parity"], "even");
        }
    }

    #[test]
    fn missing_field_csv_is_a_config_error() {
        let out = tempfile::tempdir().unwrap();
        let plan = tiny_plan(|raw| raw.mode = Some(Mode::Symmetry));
        let err = run_symmetry(&plan, out.path(), true).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn wrong_mode_for_command_is_a_config_error() {
        let out = tempfile::tempdir().unwrap();
        let plan = tiny_plan(|raw| raw.mode = Some(Mode::Reproduce));
        let err = run_solve(&plan, out.path(), true).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }
}
