use mmpath::channel::{associate, generate_dataset, NoiseModel, RadioConfig};
use mmpath::evaluation::{compare_runs, Comparison};
use mmpath::positioning::{
    group_epochs, position_trajectory, Baseline, FixMethod, FixRow, OracleLabels, PipelineConfig, Positioner,
};
use mmpath::scenes::{generate_scene, sample_route, SceneParams};

/// SBR-method fixes against strongest-path-as-LoS fixes on gNB1 of an
/// obstacle-lined corridor, over epochs both produced a fix.
fn sbr_vs_los(sigma_angle: f64) -> Comparison {
    let g = generate_scene(&SceneParams { length_m: 500.0, seed: 3, ..Default::default() }).unwrap();
    let traj = sample_route(&g.route, 800, 10.0, 1.5).unwrap();
    let noise = NoiseModel { sigma_angle, ..NoiseModel::with_defaults(5) };
    let ds = generate_dataset(&g.scene, &traj, &RadioConfig::default(), &noise, 2).unwrap();
    let groups = group_epochs(&ds.measurements);

    let gnb1_links = traj
        .iter()
        .filter_map(|tp| groups.get(&(tp.t.to_bits(), associate(g.scene.gnbs(), tp.position)[0].id)));
    let (mut n, mut blocked) = (0, 0);
    for ms in gnb1_links {
        n += 1;
        blocked += usize::from(ms.iter().all(|m| m.label != Some(0)));
    }
    assert!(blocked * 4 > n, "LoS blocked on only {blocked} of {n} epochs");

    let run = |p| position_trajectory(&g.scene, &traj, &groups, &OracleLabels, 0, p);
    let sbr: Vec<FixRow> = run(Positioner::Pipeline(PipelineConfig::default()))
        .into_iter()
        .map(|r| if r.method == Some(FixMethod::Sbr) { r } else { FixRow { method: None, est: None, ..r } })
        .collect();
    let los = run(Positioner::Baseline { baseline: Baseline::StrongestAsLos, min_crossing_deg: 10.0 });
    compare_runs("SBR", &sbr, "LoS", &los).unwrap()
}

#[test]
fn sbr_sub_30cm_beats_los_at_fine_angle_noise() {
    let c = sbr_vs_los(0.1);
    assert!(c.n > 100);
    assert!(c.a.pct_sub_30cm >= c.b.pct_sub_30cm, "{}", c.render_text());
}

#[test]
fn sbr_rms_beats_los_at_default_noise() {
    let c = sbr_vs_los(1.0);
    assert!(c.a.rms < c.b.rms, "{}", c.render_text());
}
