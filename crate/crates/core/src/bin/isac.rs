use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use isac_core::config::ScenarioFile;
use isac_core::detect::write_grid_csv;
use isac_core::echoes::write_cube;
use isac_core::harness::{apply_profile, run_sweep, ExperimentSpec, Profile, Trial, TrialArtifacts};
use isac_core::powalloc::write_allocation_csv;
use isac_core::rdest::{build_rd_matrix, joint_order, music_spectrum, search_grid, subspace, write_spectrum_csv, Side};
use isac_core::{IsacError, Result};

#[derive(Parser)]
#[command(name = "isac", version, about = "ISAC base-station sensing and allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and dump every stage's output.
    Run(Common),
    /// Run a parameter sweep described by an experiment file.
    Sweep(Common),
    /// Solve and write the per-slot power allocation only.
    Alloc(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Ci,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Ci => Profile::Ci,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Scenario file (`run`, `alloc`) or experiment file (`sweep`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Trial seed, or master seed for a sweep.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Array size and trial count preset; overrides the file's array size.
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    let (Command::Run(c) | Command::Sweep(c) | Command::Alloc(c)) = &command;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| IsacError::InvalidConfig(format!("thread pool: {e}")))?;
    }
    match command {
        Command::Run(c) => run(&c),
        Command::Sweep(c) => sweep(&c),
        Command::Alloc(c) => alloc(&c),
    }
}

fn load_scenario(c: &Common) -> Result<ScenarioFile> {
    let mut f = ScenarioFile::load(&c.config)?;
    if let Some(p) = c.profile {
        apply_profile(&mut f, p.into());
    }
    Ok(f)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn alloc(c: &Common) -> Result<()> {
    let trial = Trial::new(load_scenario(c)?.build()?)?;
    std::fs::create_dir_all(&c.out)?;
    write_allocation_csv(create(&c.out, "allocation.csv")?, &trial.plans)?;
    println!("{} slots written to {}", trial.plans.len(), c.out.join("allocation.csv").display());
    Ok(())
}

fn run(c: &Common) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    let trial = Trial::new(load_scenario(c)?.build()?)?;
    let (report, art) = trial.run_detailed(seed).map_err(|e| IsacError::Trial { trial: 0, seed, source: Box::new(e) })?;
    let out = &c.out;
    std::fs::create_dir_all(out)?;
    write_allocation_csv(create(out, "allocation.csv")?, &trial.plans)?;
    dump_artifacts(&trial, &art, out)?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    println!(
        "{} clusters, {}/{} targets detected, {} false alarms; artifacts in {}",
        art.detection.clusters.len(),
        report.detected(),
        report.truth.len(),
        report.false_alarms,
        out.display()
    );
    for e in &report.estimates {
        let range = e.range.map_or("-".to_string(), |r| format!("{r:.3}"));
        println!("  slot {:3}  theta {:8.4} deg  r {:>9} m  v {:8.3} m/s", e.slot, e.angle.to_degrees(), range, e.velocity);
    }
    Ok(())
}

fn dump_artifacts(trial: &Trial, art: &TrialArtifacts, out: &Path) -> Result<()> {
    write_cube(create(out, "echoes.bin")?, &art.echoes)?;
    write_cube(create(out, "eec.bin")?, &art.eec)?;
    write_cube(create(out, "dynamic.bin")?, &art.dynamic)?;
    let cols = art.spectra[0].cols;
    // first-subcarrier angle-Doppler magnitude before and after clutter removal
    let before = isac_core::clutterfilter::DynamicEecTensor(art.eec.0.clone());
    write_grid_csv(create(out, "adse_raw_m0.csv")?, &isac_core::detect::adse(&before, 0).magnitude(), cols)?;
    write_grid_csv(create(out, "adse_m0.csv")?, &art.spectra[0].magnitude(), cols)?;
    write_grid_csv(create(out, "energy.csv")?, &art.energy, cols)?;
    write_grid_csv(create(out, "votes.csv")?, &art.detection.votes, cols)?;
    let mask: Vec<u8> = art.detection.mask.iter().map(|&b| b as u8).collect();
    write_grid_csv(create(out, "mask.csv")?, &mask, cols)?;

    let mut w = create(out, "clusters.csv")?;
    writeln!(w, "cluster,peak_row,peak_col,theta_deg,votes,cells")?;
    for (i, cl) in art.detection.clusters.iter().enumerate() {
        let theta = trial.schedule.angles[cl.peak_row].to_degrees();
        writeln!(w, "{i},{},{},{theta},{},{}", cl.peak_row, cl.peak_col, cl.votes, cl.cells.len())?;
    }
    w.flush()?;

    let mut rows: Vec<usize> = art.detection.clusters.iter().map(|c| c.peak_row).collect();
    rows.sort_unstable();
    rows.dedup();
    let config = &trial.setup.config;
    for q in rows {
        let rd = build_rd_matrix(&art.dynamic, q);
        let dop = subspace(&rd, Side::Doppler)?;
        let rng = subspace(&rd, Side::Range)?;
        let count = art.detection.clusters.iter().filter(|c| c.peak_row == q).count();
        let order = joint_order(&dop, &rng).max(count).min(config.n_symbols.min(config.n_subcarriers) - 1);
        for (decomp, side, name, header) in
            [(&dop, Side::Doppler, "velocity", "velocity_mps"), (&rng, Side::Range, "range", "range_m")]
        {
            let grid = search_grid(side, config);
            let spectrum = music_spectrum(decomp, order, &grid, config)?;
            write_spectrum_csv(create(out, &format!("music_{name}_slot{q}.csv"))?, header, &grid, &spectrum)?;
        }
    }
    Ok(())
}

fn sweep(c: &Common) -> Result<()> {
    let mut spec = ExperimentSpec::load(&c.config)?;
    if let Some(s) = c.seed {
        spec.master_seed = s;
    }
    let mut base = spec.scenario()?;
    let profile: Profile = c.profile.map(Into::into).unwrap_or_default();
    if c.profile.is_some() {
        apply_profile(&mut base, profile);
    }
    let trials = spec.trials.unwrap_or(profile.trials());
    let out = spec.out_dir.clone().filter(|_| c.out == Path::new("out")).unwrap_or_else(|| c.out.clone());
    let report = run_sweep(&spec, &base, trials, &out)?;
    for p in &report.points {
        println!("{}", p.csv_row());
    }
    println!("results in {}", out.display());
    Ok(())
}
