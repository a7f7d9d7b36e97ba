use super::*;
use crate::agents::{train_actor_critic, TrainConfig};

const TRAP_RAW: &str = r#"
[task]
name = "trapTube"

[agent]
seeds = [0, 1, 2]
episodes = 300
evalBlock = 50
"#;

fn parse(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

fn config_error(text: &str) -> String {
    match ExperimentConfig::from_toml_str(text) {
        Err(e @ ExperimentError::Config(_)) => {
            assert_eq!(e.exit_code(), 2);
            e.to_string()
        }
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn dispenser(mode: &str, extra: &str) -> ExperimentConfig {
    parse(&format!(
        r#"
[task]
name = "dispenser"

[agent]
mode = "{mode}"
seeds = [3, 4]
episodes = 200
evalBlock = 50
{extra}
"#
    ))
}

fn card_with_returns(returns: &[f64], seeds: &[u64]) -> Scorecard {
    let mut card = run_experiment(&parse(TRAP_RAW)).unwrap();
    card.runs = returns
        .iter()
        .zip(seeds)
        .map(|(&r, &seed)| SeedRun {
            seed,
            curve: vec![r],
            final_return: r,
            episodes_to_threshold: None,
            source_counts: [0; 3],
        })
        .collect();
    card
}

mod config {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let c = parse(TRAP_RAW);
        assert_eq!(c.task.resolve().unwrap(), Task::TrapTube { length: 5, trap_effective: true });
        assert_eq!(c.agent.representation, RepresentationChoice::Raw);
        assert_eq!(c.agent.mode, IntegrationMode::EgoOnly);
        assert_eq!((c.agent.horizon, c.agent.batch_size, c.agent.buffer_capacity), (20, 8, 1000));
        assert_eq!(c.thresholds.is_clip, ClipSetting::Cap(10.0));
        assert_eq!(c.sources.natural_transitions, 50_000);
    }

    #[test]
    fn dispenser_parameters() {
        let c = parse("[task]\nname = \"dispenser\"\nflipProb = 0.3\nconfound = true\n[agent]\nseeds = [1]\nepisodes = 10\nevalBlock = 5\n");
        assert_eq!(c.task.resolve().unwrap(), Task::Dispenser { flip_prob: 0.3, confound: true });
    }

    #[test]
    fn unknown_task_names_the_field() {
        let msg = config_error(&TRAP_RAW.replace("trapTube", "mazeRunner"));
        assert!(msg.contains("task.name"), "{msg}");
        assert!(msg.contains("mazeRunner"), "{msg}");
    }

    #[test]
    fn parameter_of_another_task_is_rejected() {
        let msg = config_error(&TRAP_RAW.replace("name = \"trapTube\"", "name = \"trapTube\"\nflipProb = 0.1"));
        assert!(msg.contains("task.flipProb"), "{msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let msg = config_error(&TRAP_RAW.replace("episodes = 300", "episodes = 300\nepisdoes = 3"));
        assert!(msg.contains("episdoes"), "{msg}");
        config_error(&format!("{TRAP_RAW}\n[extra]\nx = 1\n"));
    }

    #[test]
    fn field_checks() {
        for (from, to, field) in [
            ("seeds = [0, 1, 2]", "seeds = []", "agent.seeds"),
            ("episodes = 300", "episodes = 0", "agent.episodes"),
            ("evalBlock = 50", "evalBlock = 70", "agent.evalBlock"),
        ] {
            let msg = config_error(&TRAP_RAW.replace(from, to));
            assert!(msg.contains(field), "{field}: {msg}");
        }
        let msg = config_error(&format!("{TRAP_RAW}\n[thresholds]\nisClip = 0.5\n"));
        assert!(msg.contains("thresholds.isClip"), "{msg}");
        let msg = config_error(&format!("{TRAP_RAW}\n[sources]\nsocial = -1.0\n"));
        assert!(msg.contains("sources.social"), "{msg}");
        config_error(&format!("{TRAP_RAW}\n[thresholds]\nisClip = \"never\"\n"));
        config_error("not toml at all [");
    }

    #[test]
    fn clip_can_be_switched_off() {
        let c = parse(&format!("{TRAP_RAW}\n[thresholds]\nisClip = \"off\"\n"));
        assert_eq!(c.thresholds.is_clip.cap(), None);
        let c = parse(&format!("{TRAP_RAW}\n[thresholds]\nisClip = 3\n"));
        assert_eq!(c.thresholds.is_clip.cap(), Some(3.0));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let e = ExperimentConfig::from_file(std::path::Path::new("/nonexistent/exp.toml")).unwrap_err();
        assert!(matches!(e, ExperimentError::Io { .. }));
        assert_eq!(e.exit_code(), 3);
    }
}

mod run {
    use super::*;

    #[test]
    fn ego_only_matches_direct_training() {
        let config = parse(TRAP_RAW);
        let card = run_experiment(&config).unwrap();
        let env = Pomdp::fully_observed(crate::env::build_trap_tube_task(5, true).unwrap());
        let train = TrainConfig { episodes: 300, eval_block: 50, ..TrainConfig::default() };
        for run in &card.runs {
            let direct = train_actor_critic(&env, &Representation::Raw, &train, run.seed).unwrap();
            assert_eq!(run.final_return, direct.final_return);
            assert_eq!(run.curve, direct.curve);
        }
        assert_eq!(card.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn curve_length_is_budget_over_block() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        assert!(card.runs.iter().all(|r| r.curve.len() == 300 / 50));
        assert!((card.optimal_return - 0.98333).abs() < 1e-4);
        assert_eq!(card.return_threshold, 0.95 * card.optimal_return);
    }

    #[test]
    fn episodes_to_threshold_is_the_first_block_at_or_above() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        for r in &card.runs {
            let expected = r.curve.iter().position(|&c| c >= card.return_threshold).map(|i| (i + 1) * 50);
            assert_eq!(r.episodes_to_threshold, expected);
        }
    }

    #[test]
    fn source_counts_add_up() {
        for card in [run_experiment(&parse(TRAP_RAW)).unwrap(), run_experiment(&dispenser("egoSocial", "")).unwrap()] {
            let per_run: usize = card.runs.iter().map(|r| r.source_counts.iter().sum::<usize>()).sum();
            assert_eq!(card.source_counts.iter().sum::<usize>(), card.total_draws);
            assert_eq!(per_run, card.total_draws);
            assert_eq!(card.total_draws, card.runs.len() * card.episodes * 8);
        }
    }

    #[test]
    fn social_mode_draws_demonstrations() {
        let card = run_experiment(&dispenser("egoSocial", "")).unwrap();
        assert!(card.source_counts[1] > 0);
        assert_eq!(card.source_counts[2], 0);
        let ego = run_experiment(&dispenser("egoOnly", "")).unwrap();
        assert_eq!(ego.source_counts[1], 0);
    }

    #[test]
    fn structure_of_the_dispenser_is_recovered() {
        let card = run_experiment(&dispenser("egoOnly", "")).unwrap();
        assert_eq!(card.model_source, SourceTag::Egocentric);
        assert_eq!(card.parents, card.true_parents);
        assert!(card.parents_exact);
    }

    #[test]
    fn natural_mode_learns_from_action_free_data() {
        let card = run_experiment(&dispenser("egoNatural", "")).unwrap();
        assert_eq!(card.model_source, SourceTag::Natural);
        assert!(card.parents_exact);
        for (learned, truth) in card.parents.iter().zip(&card.true_parents) {
            assert!(!learned.contains(&Parent::Action));
            if !truth.contains(&Parent::Action) {
                assert_eq!(learned, truth);
            }
        }
        assert_eq!(card.source_counts[2], 0);
    }

    #[test]
    fn social_natural_mode_never_updates_the_policy() {
        let card = run_experiment(&dispenser("socialNatural", "")).unwrap();
        assert_eq!(card.total_draws, 0);
        assert!(card.runs.iter().all(|r| r.curve.len() == 4));
    }

    #[test]
    fn raw_codes_score_perfectly() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        assert!((card.scores.modularity_score - 1.0).abs() < 1e-9);
        assert!((card.scores.informativeness_score - 1.0).abs() < 1e-9);
        assert_eq!(card.n_states, card.partition.n_states());
        assert_eq!(card.compression_ratio, card.bisimulation_blocks as f64 / card.n_states as f64);
    }

    #[test]
    fn observation_codes_miss_the_hidden_weight() {
        let config = parse(
            "[task]\nname = \"dispenser\"\nconfound = true\n[agent]\nrepresentation = \"mixedObservation\"\nseeds = [0]\nepisodes = 50\nevalBlock = 50\n",
        );
        let card = run_experiment(&config).unwrap();
        assert_eq!(card.scores.mi_matrix.len(), 5);
        assert!(card.scores.mi_matrix.iter().all(|row| row.len() == 4));
        assert!(card.scores.mi_matrix[4].iter().all(|&v| v.abs() < 1e-12));
        assert!(card.scores.informativeness_score < 1.0);
    }

    #[test]
    fn learned_codes_run_end_to_end() {
        let config = parse(
            "[task]\nname = \"dispenser\"\n[agent]\nrepresentation = \"learnedCodes\"\nseeds = [0]\nepisodes = 100\nevalBlock = 50\n[vae]\nsteps = 200\n",
        );
        let card = run_experiment(&config).unwrap();
        assert_eq!(card.scores.mi_matrix.len(), 4);
        assert!(card.scores.mi_matrix.iter().all(|row| row.len() == 4));
        assert_eq!(card.runs[0].curve.len(), 2);
    }

    #[test]
    fn reruns_are_identical() {
        let config = dispenser("egoSocial", "");
        assert_eq!(run_experiment(&config).unwrap(), run_experiment(&config).unwrap());
    }

    #[test]
    #[ignore = "does not hold for tabular policies; see the project notes on learned codes"]
    fn learned_codes_reach_the_raw_band_sooner_than_observations() {
        let make = |representation: &str| {
            parse(&format!(
                "[task]\nname = \"dispenser\"\nconfound = true\n[agent]\nrepresentation = \"{representation}\"\nseeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]\nepisodes = 2000\nevalBlock = 100\n"
            ))
        };
        let raw = run_experiment(&make("raw")).unwrap();
        let band = raw.final_mean - raw.final_stderr;
        let reach = |card: &Scorecard| -> Vec<usize> {
            card.runs
                .iter()
                .map(|r| r.curve.iter().position(|&c| c >= band).map_or(usize::MAX, |i| (i + 1) * 100))
                .collect()
        };
        let mixed = reach(&run_experiment(&make("mixedObservation")).unwrap());
        let learned = reach(&run_experiment(&make("learnedCodes")).unwrap());
        let wins = learned.iter().zip(&mixed).filter(|(l, m)| l < m).count();
        println!("band {band}, learned {learned:?}, mixed {mixed:?}, wins {wins}");
        assert!(wins > 5, "learned codes won on {wins} of 10 seeds");
    }
}

mod report {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let card = run_experiment(&dispenser("egoNatural", "")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&card, dir.path()).unwrap();
        assert_eq!(load_scorecard(dir.path()).unwrap(), card);
    }

    #[test]
    fn creates_missing_directories() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b");
        let paths = emit_report(&card, &nested).unwrap();
        assert_eq!(paths.len(), 4);
        for name in [CURVES_FILE, SCORECARD_FILE, MI_MATRIX_FILE, PARTITION_FILE] {
            assert!(nested.join(name).is_file(), "{name}");
        }
    }

    #[test]
    fn reports_are_byte_identical_across_runs() {
        let config = dispenser("egoSocial", "");
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        emit_report(&run_experiment(&config).unwrap(), a.path()).unwrap();
        emit_report(&run_experiment(&config).unwrap(), b.path()).unwrap();
        for name in [CURVES_FILE, SCORECARD_FILE, MI_MATRIX_FILE, PARTITION_FILE] {
            assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
    }

    #[test]
    fn mi_matrix_has_factor_rows_and_code_columns() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&card, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(MI_MATRIX_FILE)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "factor,Z0,Z1,Z2");
        assert_eq!(lines.len(), 1 + 3);
        for (j, line) in lines[1..].iter().enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0], format!("S{j}"));
            assert_eq!(cells.len(), 1 + 3);
            for (k, c) in cells[1..].iter().enumerate() {
                assert_eq!(c.parse::<f64>().unwrap(), card.scores.mi_matrix[j][k]);
            }
        }
    }

    #[test]
    fn curves_aggregate_over_seeds() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&card, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(CURVES_FILE)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "episodeBlock,meanReturn,stderr");
        assert_eq!(lines.len(), 1 + 6);
        let last: Vec<&str> = lines[6].split(',').collect();
        assert_eq!(last[0], "300");
        let m: f64 = last[1].parse().unwrap();
        let se: f64 = last[2].parse().unwrap();
        assert_eq!(m, card.final_mean);
        assert_eq!(se, card.final_stderr);
    }

    #[test]
    fn partition_file_lists_blocks() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&card, dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(PARTITION_FILE)).unwrap()).unwrap();
        assert_eq!(v["nStates"], card.n_states);
        assert_eq!(v["nBlocks"], card.bisimulation_blocks);
        assert_eq!(v["blockOf"].as_array().unwrap().len(), card.n_states);
    }

    #[test]
    fn unwritable_target_is_an_io_error() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        std::fs::write(&file, "x").unwrap();
        let e = emit_report(&card, &file).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert_eq!(load_scorecard(dir.path()).unwrap_err().exit_code(), 3);
    }
}

mod compare {
    use super::*;

    #[test]
    fn self_comparison_is_zero() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        let report = compare_agents(&[card.clone(), card], Metric::FinalReturn).unwrap();
        let p = &report.pairs[0];
        assert!(p.paired);
        assert_eq!(p.mean_difference, 0.0);
        assert!(p.ci_lower <= 0.0 && p.ci_upper >= 0.0);
        assert!(!p.significant);
        assert_eq!(report.resamples, 10_000);
    }

    #[test]
    fn constant_shift_is_significant() {
        let card = run_experiment(&parse(TRAP_RAW)).unwrap();
        let mut shifted = card.clone();
        for r in &mut shifted.runs {
            r.final_return += 1.0;
        }
        let report = compare_agents(&[card, shifted], Metric::FinalReturn).unwrap();
        let p = &report.pairs[0];
        assert!((p.mean_difference - 1.0).abs() < 1e-12);
        assert!(p.ci_lower > 0.0);
        assert!(p.significant);
    }

    #[test]
    fn all_pairs_in_order() {
        let a = card_with_returns(&[0.0, 0.1, 0.2], &[0, 1, 2]);
        let b = card_with_returns(&[0.5, 0.6, 0.7], &[0, 1, 2]);
        let c = card_with_returns(&[0.5, 0.6, 0.7], &[0, 1, 2]);
        let report = compare_agents(&[a, b, c], Metric::FinalReturn).unwrap();
        let ids: Vec<(usize, usize)> = report.pairs.iter().map(|p| (p.first, p.second)).collect();
        assert_eq!(ids, vec![(0, 1), (0, 2), (1, 2)]);
        assert!(report.pairs[0].significant);
        assert!(!report.pairs[2].significant);
    }

    #[test]
    fn different_seeds_fall_back_to_unpaired() {
        let a = card_with_returns(&[0.0, 0.2, 0.4], &[0, 1, 2]);
        let b = card_with_returns(&[1.0, 1.2, 1.4, 1.6], &[5, 6, 7, 8]);
        let p = &compare_agents(&[a, b], Metric::FinalReturn).unwrap().pairs[0];
        assert!(!p.paired);
        assert!((p.mean_difference - (1.3 - 0.2)).abs() < 1e-12);
        assert!(p.significant);
    }

    #[test]
    fn unreached_threshold_counts_as_one_block_past_the_budget() {
        let mut a = card_with_returns(&[0.0, 0.0], &[0, 1]);
        let mut b = a.clone();
        a.runs[0].episodes_to_threshold = Some(100);
        a.runs[1].episodes_to_threshold = Some(100);
        b.runs[0].episodes_to_threshold = None;
        b.runs[1].episodes_to_threshold = Some(100);
        let p = &compare_agents(&[a.clone(), b], Metric::EpisodesToThreshold).unwrap().pairs[0];
        let censored = (a.episodes + a.eval_block) as f64;
        assert!((p.mean_difference - (censored - 100.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn different_tasks_are_rejected() {
        let a = run_experiment(&parse(TRAP_RAW)).unwrap();
        let mut b = a.clone();
        b.task = Task::TrapTube { length: 6, trap_effective: true };
        assert!(matches!(compare_agents(&[a.clone(), b], Metric::FinalReturn), Err(ExperimentError::TaskMismatch(_))));
        assert!(matches!(compare_agents(&[a], Metric::FinalReturn), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("finalReturn".parse::<Metric>().unwrap(), Metric::FinalReturn);
        assert_eq!("episodesToThreshold".parse::<Metric>().unwrap(), Metric::EpisodesToThreshold);
        assert!("speed".parse::<Metric>().is_err());
    }
}
