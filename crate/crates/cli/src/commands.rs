//! One function per subcommand. Each stages its inputs, runs the core
//! pipeline on a local thread pool, and writes artifacts into the output
//! directory. Errors bubble up as [`CliError`] so `main` can map them to the
//! documented exit codes.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use log::info;
use resilisim_core::enhance::{self, evolve, GenerationStats};
use resilisim_core::network::{
    generate_testbed, load_inputs, load_wind_samples, read_graph, synthesize,
    write_buildings_csv, write_network_geojson, write_roads_jsonl, write_substations_csv,
    write_tree_raster, write_wind_samples_csv, NetworkGraph,
};
use resilisim_core::simulation::{
    run_estimate, write_convergence_csv, write_resilience_csv, write_resilience_geojson,
    EpisodeContext, EpisodeReader, EpisodeWriter, StoreMeta,
};
use resilisim_core::weather::fit_wind;

use crate::config::{require_artifact, RunConfig};
use crate::CliError;

/// Artifact file names inside `paths.out_dir`. Fixed so `report` and rerun
/// pipelines can find them without extra configuration.
pub const NETWORK_BIN: &str = "network.bin";
pub const NETWORK_GEOJSON: &str = "network.geojson";
pub const EPISODES_BIN: &str = "episodes.bin";
pub const RESILIENCE_CSV: &str = "resilience.csv";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const RESILIENCE_GEOJSON: &str = "resilience.geojson";
pub const PLAN_JSON: &str = "plan.json";
pub const GA_HISTORY_CSV: &str = "ga_history.csv";
pub const PLAN_GEOJSON: &str = "plan.geojson";
pub const REPORT_TXT: &str = "report.txt";

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    Ok(())
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.paths.out_dir).with_context(|| {
        format!(
            "cannot create output directory {}",
            cfg.paths.out_dir.display()
        )
    })
}

/// Build the thread pool every simulation runs in. `threads = 0` defers to
/// rayon's default (one worker per hardware thread).
fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::runtime(anyhow!(e).context("cannot build thread pool")))
}

/// Generate the synthetic city and write it out as the five raw input files,
/// exactly as a real data drop would arrive.
pub fn cmd_testbed(cfg: &RunConfig) -> Result<(), CliError> {
    let data = generate_testbed(&cfg.testbed, cfg.master_seed);
    let write = || -> Result<()> {
        for (_, path) in cfg.input_files() {
            ensure_parent(path)?;
        }
        write_substations_csv(&cfg.paths.substations, &data.substations)?;
        write_roads_jsonl(&cfg.paths.roads, &data.roads)?;
        write_buildings_csv(&cfg.paths.buildings, &data.buildings)?;
        write_tree_raster(&cfg.paths.tree_cover, &data.tree)?;
        write_wind_samples_csv(&cfg.paths.wind_samples, &data.wind_samples)?;
        Ok(())
    };
    write().map_err(CliError::runtime)?;
    println!(
        "testbed written: {} substations, {} roads, {} buildings, {}x{} tree cells, {} wind samples",
        data.substations.len(),
        data.roads.len(),
        data.buildings.len(),
        data.tree.rows,
        data.tree.cols,
        data.wind_samples.len()
    );
    for (label, path) in cfg.input_files() {
        println!("  {label}: {}", path.display());
    }
    Ok(())
}

/// Ingest the raw inputs and synthesize the network graph.
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    for (label, path) in cfg.input_files() {
        if label != "wind samples" && !path.is_file() {
            return Err(CliError::config(anyhow!(
                "{label} file {} not found; point [paths] at your inputs or run `resilisim testbed`",
                path.display()
            )));
        }
    }
    let inputs = load_inputs(
        &cfg.paths.substations,
        &cfg.paths.roads,
        &cfg.paths.buildings,
        &cfg.paths.tree_cover,
    )
    .map_err(|e| CliError::runtime(anyhow!(e).context("cannot ingest network inputs")))?;
    let (graph, stats) = synthesize(&inputs, &cfg.network)
        .map_err(|e| CliError::runtime(anyhow!(e).context("network synthesis failed")))?;

    ensure_out_dir(cfg).map_err(CliError::runtime)?;
    let bin = cfg.artifact(NETWORK_BIN);
    let geo = cfg.artifact(NETWORK_GEOJSON);
    resilisim_core::network::write_graph(&bin, &graph).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", bin.display())))
    })?;
    write_network_geojson(&geo, &graph).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", geo.display())))
    })?;

    println!("{stats}");
    println!("areas:");
    for (a, name) in graph.area_names.iter().enumerate() {
        println!(
            "  {a} {name}: {} customers",
            graph.area_customers()[a]
        );
    }
    println!("network graph: {}", bin.display());
    println!("network geojson: {}", geo.display());
    Ok(())
}

/// Run the Monte Carlo estimate: simulate `n_episodes` storms, record every
/// episode for later replay, and write the per-area resilience artifacts.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let bin = cfg.artifact(NETWORK_BIN);
    require_artifact(&bin, "synth").map_err(CliError::config)?;
    require_artifact(&cfg.paths.wind_samples, "testbed").map_err(CliError::config)?;

    let graph = read_graph(&bin).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot read {}", bin.display())))
    })?;
    let samples = load_wind_samples(&cfg.paths.wind_samples)
        .map_err(|e| CliError::runtime(anyhow!(e).context("cannot ingest wind samples")))?;
    let wind = fit_wind(&samples.records)
        .map_err(|e| CliError::runtime(anyhow!(e).context("cannot fit wind distribution")))?;
    let fragility = cfg.fragility.model();
    let ctx = EpisodeContext {
        graph: &graph,
        wind: &wind,
        storm: &cfg.weather,
        fragility: &fragility,
        sim: &cfg.simulation,
        crews: &cfg.crews,
        master_seed: cfg.master_seed,
    };

    ensure_out_dir(cfg).map_err(CliError::runtime)?;
    let store_path = cfg.artifact(EPISODES_BIN);
    let meta = StoreMeta::for_run(&graph, cfg.master_seed, cfg.simulation.horizon_h);
    let mut writer = EpisodeWriter::create(&store_path, meta).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot create {}", store_path.display())))
    })?;

    info!(
        "estimating over {} episodes, seed {}",
        cfg.n_episodes, cfg.master_seed
    );
    let pool = thread_pool(cfg.threads)?;
    let outcome = pool
        .install(|| run_estimate(&ctx, cfg.n_episodes, |ep| writer.append(ep).map_err(Into::into)))
        .map_err(|e| CliError::runtime(anyhow!(e).context("episode simulation failed")))?;
    let recorded = writer
        .finish()
        .map_err(|e| CliError::runtime(anyhow!(e).context("cannot finalize episode store")))?;

    let res_csv = cfg.artifact(RESILIENCE_CSV);
    let conv_csv = cfg.artifact(CONVERGENCE_CSV);
    let res_geo = cfg.artifact(RESILIENCE_GEOJSON);
    write_resilience_csv(&res_csv, &graph, &outcome.areas).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", res_csv.display())))
    })?;
    write_convergence_csv(&conv_csv, &graph, &outcome, cfg.report_stride).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", conv_csv.display())))
    })?;
    write_resilience_geojson(&res_geo, &graph, &outcome.areas).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", res_geo.display())))
    })?;

    println!(
        "{recorded} episodes recorded to {} (lambda = {})",
        store_path.display(),
        cfg.simulation.lambda
    );
    println!("area resilience:");
    for est in &outcome.areas {
        println!(
            "  {} {}: R = {:.4} ({} gust episodes of {})",
            est.area, graph.area_names[est.area as usize], est.r, est.n_gust, est.n_episodes
        );
    }
    println!("resilience csv: {}", res_csv.display());
    println!("convergence csv: {}", conv_csv.display());
    println!("resilience geojson: {}", res_geo.display());
    Ok(())
}

/// Map configured area names onto area ids, rejecting unknown names with the
/// list of valid ones.
fn resolve_areas(cfg: &RunConfig, graph: &NetworkGraph) -> Result<Option<Vec<u32>>, CliError> {
    if cfg.areas.is_empty() {
        return Ok(None);
    }
    let mut ids = Vec::with_capacity(cfg.areas.len());
    for name in &cfg.areas {
        match graph.area_names.iter().position(|n| n == name) {
            Some(i) => ids.push(i as u32),
            None => {
                return Err(CliError::config(anyhow!(
                    "unknown area {name:?}; this network has: {}",
                    graph.area_names.join(", ")
                )))
            }
        }
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(Some(ids))
}

/// Search for a solar/battery placement plan that lifts the worst-area
/// resilience, replaying the recorded episodes as the fitness oracle.
pub fn cmd_enhance(cfg: &RunConfig) -> Result<(), CliError> {
    let bin = cfg.artifact(NETWORK_BIN);
    let store_path = cfg.artifact(EPISODES_BIN);
    require_artifact(&bin, "synth").map_err(CliError::config)?;
    require_artifact(&store_path, "estimate").map_err(CliError::config)?;

    let graph = read_graph(&bin).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot read {}", bin.display())))
    })?;
    let mut reader = EpisodeReader::open(&store_path).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot open {}", store_path.display())))
    })?;
    if let Err(e) = reader.meta().check_graph(&graph) {
        return Err(CliError::config(anyhow!(e).context(
            "episode store was recorded against a different network; rerun `resilisim estimate`",
        )));
    }
    if reader.n_episodes() == 0 {
        return Err(CliError::config(anyhow!(
            "episode store {} holds no completed episodes; rerun `resilisim estimate`",
            store_path.display()
        )));
    }
    let episodes = reader
        .read_all(cfg.ga.replay_subsample)
        .map_err(|e| CliError::runtime(anyhow!(e).context("cannot read recorded episodes")))?;
    let area_filter = resolve_areas(cfg, &graph)?;

    info!(
        "evolving plans over {} recorded episodes, population {}, {} generations",
        episodes.len(),
        cfg.ga.population,
        cfg.ga.generations
    );
    let pool = thread_pool(cfg.threads)?;
    let outcome = pool.install(|| {
        evolve(
            &graph,
            &episodes,
            &cfg.ga,
            &cfg.simulation,
            area_filter.as_deref(),
            cfg.master_seed,
        )
    });

    // Generation 0 is the do-nothing baseline; every feasible plan replays at
    // least as well, so the best column stays non-decreasing from row one.
    let mut history = Vec::with_capacity(outcome.history.len() + 1);
    history.push(GenerationStats {
        generation: 0,
        best_fitness: outcome.baseline_fitness,
        mean_fitness: outcome.baseline_fitness,
    });
    history.extend(outcome.history.iter().cloned());

    let plan_json = cfg.artifact(PLAN_JSON);
    let plan_geo = cfg.artifact(PLAN_GEOJSON);
    let hist_csv = cfg.artifact(GA_HISTORY_CSV);
    enhance::write_plan_json(&plan_json, &outcome.best).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", plan_json.display())))
    })?;
    enhance::write_plan_geojson(&plan_geo, &graph, &outcome.best).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", plan_geo.display())))
    })?;
    enhance::write_ga_history_csv(&hist_csv, &history).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", hist_csv.display())))
    })?;

    let scope = match &area_filter {
        Some(ids) => ids
            .iter()
            .map(|&i| graph.area_names[i as usize].as_str())
            .collect::<Vec<_>>()
            .join(", "),
        None => "all areas".to_string(),
    };
    println!(
        "baseline min R ({scope}): {:.4}",
        outcome.baseline_fitness
    );
    println!(
        "enhanced min R:          {:.4} (+{:.4})",
        outcome.best_fitness,
        outcome.best_fitness - outcome.baseline_fitness
    );
    println!(
        "plan: {} placements, {:.0} kW total, cost {:.0}",
        outcome.best.placements.len(),
        outcome
            .best
            .placements
            .iter()
            .map(|p| p.capacity_kw)
            .sum::<f64>(),
        outcome.best.cost(&cfg.ga)
    );
    println!("plan json: {}", plan_json.display());
    println!("plan geojson: {}", plan_geo.display());
    println!("ga history csv: {}", hist_csv.display());
    Ok(())
}

/// Parsed row of `resilience.csv`.
struct ResilienceRow {
    area_id: String,
    r: f64,
    n_gust: u64,
    episodes: u64,
}

fn read_resilience_csv(path: &Path) -> Result<Vec<ResilienceRow>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "area_id,R_i,N_gust,episodes" {
        anyhow::bail!(
            "{} does not look like a resilience table (header {header:?})",
            path.display()
        );
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        let ctx = || format!("{} line {}", path.display(), i + 2);
        if parts.len() != 4 {
            anyhow::bail!("{}: expected 4 fields, got {}", ctx(), parts.len());
        }
        rows.push(ResilienceRow {
            area_id: parts[0].to_string(),
            r: parts[1].parse().with_context(ctx)?,
            n_gust: parts[2].parse().with_context(ctx)?,
            episodes: parts[3].parse().with_context(ctx)?,
        });
    }
    Ok(rows)
}

/// First and last `best_fitness` values of `ga_history.csv`.
fn read_history_span(path: &Path) -> Result<Option<(f64, f64, u64)>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut first = None;
    let mut last = None;
    let mut rows = 0u64;
    for line in text.lines().skip(1) {
        let best: f64 = line
            .split(',')
            .nth(1)
            .ok_or_else(|| anyhow!("malformed row in {}", path.display()))?
            .parse()
            .with_context(|| format!("malformed row in {}", path.display()))?;
        if first.is_none() {
            first = Some(best);
        }
        last = Some(best);
        rows += 1;
    }
    Ok(first.zip(last).map(|(f, l)| (f, l, rows)))
}

/// Summarize whatever artifacts exist into a plain-text report, printed and
/// saved alongside them. Rerunning after `enhance` extends the same report.
pub fn cmd_report(cfg: &RunConfig) -> Result<(), CliError> {
    let res_csv = cfg.artifact(RESILIENCE_CSV);
    require_artifact(&res_csv, "estimate").map_err(CliError::config)?;
    let rows = read_resilience_csv(&res_csv).map_err(CliError::runtime)?;
    if rows.is_empty() {
        return Err(CliError::runtime(anyhow!(
            "{} holds no area rows",
            res_csv.display()
        )));
    }

    let mut out = String::new();
    out.push_str("resilience by area\n");
    for row in &rows {
        out.push_str(&format!(
            "  {}: R = {:.4} ({} gust episodes of {})\n",
            row.area_id, row.r, row.n_gust, row.episodes
        ));
    }
    let worst = rows
        .iter()
        .min_by(|a, b| a.r.total_cmp(&b.r))
        .expect("rows is non-empty");
    out.push_str(&format!(
        "weakest area: {} (R = {:.4})\n",
        worst.area_id, worst.r
    ));

    let plan_json = cfg.artifact(PLAN_JSON);
    let hist_csv = cfg.artifact(GA_HISTORY_CSV);
    if plan_json.is_file() && hist_csv.is_file() {
        let plan = enhance::read_plan_json(&plan_json)
            .map_err(|e| CliError::runtime(anyhow!(e).context("cannot read placement plan")))?;
        let span = read_history_span(&hist_csv).map_err(CliError::runtime)?;
        out.push_str("\nplacement plan\n");
        let (solar_kw, battery_kw) = plan.placements.iter().fold((0.0, 0.0), |(s, b), p| {
            match p.kind {
                enhance::DerKind::Solar => (s + p.capacity_kw, b),
                enhance::DerKind::Battery => (s, b + p.capacity_kw),
            }
        });
        out.push_str(&format!(
            "  {} placements: {:.0} kW solar, {:.0} kW battery, cost {:.0}\n",
            plan.placements.len(),
            solar_kw,
            battery_kw,
            plan.cost(&cfg.ga)
        ));
        if let Some((baseline, enhanced, generations)) = span {
            out.push_str(&format!(
                "  min-area R: {baseline:.4} -> {enhanced:.4} (+{:.4}) over {} generations\n",
                enhanced - baseline,
                generations.saturating_sub(1)
            ));
        }
    }

    print!("{out}");
    ensure_out_dir(cfg).map_err(CliError::runtime)?;
    let report_path = cfg.artifact(REPORT_TXT);
    fs::write(&report_path, &out).map_err(|e| {
        CliError::runtime(anyhow!(e).context(format!("cannot write {}", report_path.display())))
    })?;
    println!("report: {}", report_path.display());
    Ok(())
}
