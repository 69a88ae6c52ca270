//! `netx simulate`: synthetic experiment with recorded ground truth.
//!
//! Emits every input the other commands consume — edge list, post log,
//! participant roster, planted clustering — plus an assignment drawn under
//! the scenario's design, an outcome panel carrying the planted effects,
//! `truth.json` with every planted parameter, and a manifest hashing all
//! of it.

use crate::util::{read_toml, with_cleanup, OutputTracker};
use clap::Args;
use netx_core::design::assign;
use netx_core::error::{Error, Result};
use netx_core::exposure::{classify_exposure, ExposureClassification, NeighborhoodExposure};
use netx_core::io::{
    write_assignment_csv, write_clusters_csv, write_edges_csv, write_json, write_panel_csv,
    write_posts_jsonl, write_roster,
};
use netx_core::report::{Provenance, RunManifest};
use netx_core::rng::derive;
use netx_core::simlab::{
    default_periods, gen_network, gen_outcomes, gen_post_log, truth_of, ScenarioSpec,
};
use netx_core::Real;
use std::path::PathBuf;

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario description (TOML)
    #[arg(long)]
    pub scenario: PathBuf,
    /// Master seed; every generated byte is a function of scenario + seed
    #[arg(long)]
    pub seed: u64,
    /// Directory for the generated dataset (created if missing)
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let spec: ScenarioSpec = read_toml(&args.scenario)?;
    // the TOML path skips validated constructors, so re-check here
    netx_core::design::DesignParams::new(spec.design.p_t, spec.design.p_hp)?;
    let periods = default_periods();

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let out = |name: &str| args.out_dir.join(name);

    let (graph, clusters) = gen_network(&spec.network, args.seed)?;
    let a = assign(&clusters, &spec.design, derive(args.seed, "assign", 0));
    let posts = gen_post_log(&spec, &periods, args.seed)?;

    // classify exposure over the graph, then widen to the full user list
    let z_graph: Vec<bool> = graph
        .ids()
        .iter()
        .map(|id| {
            let i = a.ids.binary_search(id).expect("graph ids come from the user list");
            a.z[i]
        })
        .collect();
    let class_graph = classify_exposure(&graph, &z_graph, spec.q)?;
    let mut exposure = vec![NeighborhoodExposure::Low; a.ids.len()];
    let mut condition = vec![None; a.ids.len()];
    for (g, id) in graph.ids().iter().enumerate() {
        let i = a.ids.binary_search(id).expect("graph ids come from the user list");
        exposure[i] = class_graph.exposure[g];
        condition[i] = class_graph.condition[g];
    }
    let class = ExposureClassification { q: spec.q, exposure, condition };
    let panel = gen_outcomes(&a.ids, &a.z, Some(&class), &spec.outcomes, &periods, args.seed)?;

    let edges: Vec<(String, String, Real)> = (0..graph.n() as u32)
        .flat_map(|i| {
            graph
                .out_neighbors(i)
                .iter()
                .map(move |&(j, w)| (i, j, w))
                .collect::<Vec<_>>()
        })
        .map(|(i, j, w)| (graph.id(i).to_string(), graph.id(j).to_string(), w))
        .collect();

    let truth = truth_of(&spec, args.seed);

    with_cleanup(|t: &mut OutputTracker| {
        t.add(&out("edges.csv"));
        write_edges_csv(&out("edges.csv"), &edges)?;
        t.add(&out("clusters.csv"));
        write_clusters_csv(&out("clusters.csv"), &clusters)?;
        t.add(&out("roster.txt"));
        write_roster(&out("roster.txt"), &a.ids)?;
        t.add(&out("posts.jsonl"));
        write_posts_jsonl(&out("posts.jsonl"), &posts)?;
        t.add_with_meta(&out("assignment.csv"));
        write_assignment_csv(&out("assignment.csv"), &a)?;
        t.add_with_meta(&out("panel.csv"));
        write_panel_csv(&out("panel.csv"), &panel)?;
        t.add(&out("truth.json"));
        write_json(&out("truth.json"), &truth)?;

        let mut prov = Provenance::new("simulate", Some(args.seed)).param("scenario", &spec);
        crate::util::hash_input(&mut prov, &args.scenario)?;
        let mut manifest = RunManifest::new(&prov);
        for f in t.files().to_vec() {
            manifest.record_output(&f)?;
        }
        t.add(&out("manifest.json"));
        write_json(&out("manifest.json"), &manifest)
    })?;

    eprintln!(
        "simulated {} users / {} clusters / {} posts -> {}",
        a.ids.len(),
        clusters.n_clusters(),
        posts.len(),
        args.out_dir.display()
    );
    Ok(())
}
