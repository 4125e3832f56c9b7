use hopper_core::RunOptions;
use hopper_sim::config::parse_config;
use hopper_sim::experiment::{run_experiment, summarize};
use hopper_sim::output::{links_header, runs_header, summary_header, write_experiment, write_runs, SUMMARY_METRICS};

const HOPPER: &str = "protocol = hopper\nn_repeaters = 2\ncells_per_direction = [3, 12]\n\
                      n_applications = [1, 8]\nduration_s = 3\nn_replications = 3\nbase_seed = 5\n";
const SYNC: &str = "protocol = sync\ncells_per_direction = [2, 6]\np_le = [0.3, 0.6, 0.9]\n\
                    duration_s = 3\nn_replications = 3\nbase_seed = 5\n";

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn files_follow_the_documented_schema() {
    let config = parse_config(HOPPER).unwrap();
    let result = run_experiment(&config, RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_experiment(dir.path(), &result, &summarize(&result)).unwrap();

    let (h, rows) = read_csv(&dir.path().join("runs.csv"));
    assert_eq!(h, runs_header());
    assert_eq!(rows.len(), 4 * 3);
    // grid order, then replication order
    let order: Vec<(String, String)> = rows.iter().map(|r| (r[1].clone(), r[8].clone())).collect();
    assert_eq!(order[0], ("0".into(), "0".into()));
    assert_eq!(order[4], ("1".into(), "1".into()));

    let (h, rows) = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(h, summary_header());
    assert_eq!(rows.len(), 4);
    for m in SUMMARY_METRICS {
        assert!(h.contains(&format!("{m}_mean")) && h.contains(&format!("{m}_ci95")));
    }
    let best = h.iter().position(|c| c == "best_p").unwrap();
    assert!(rows.iter().all(|r| r[best].is_empty()));

    let (h, rows) = read_csv(&dir.path().join("links.csv"));
    assert_eq!(h, links_header());
    assert_eq!(rows.len(), 4 * 3 * 3);
    assert!(!dir.path().join("trace").exists());
}

#[test]
fn sync_summary_marks_one_best_p_per_chain() {
    let config = parse_config(SYNC).unwrap();
    let result = run_experiment(&config, RunOptions::default()).unwrap();
    let summaries = summarize(&result);
    for chunk in summaries.chunks(3) {
        let best: Vec<_> = chunk.iter().filter(|s| s.is_best_p).collect();
        assert_eq!(best.len(), 1);
        let top = chunk.iter().map(|s| s.throughput.mean).fold(f64::MIN, f64::max);
        assert_eq!(best[0].throughput.mean, top);
        assert!(chunk.iter().all(|s| s.best_p == best[0].point.scenario.p_le));
    }
}

#[test]
fn identical_configs_write_identical_bytes() {
    for text in [HOPPER, SYNC] {
        let config = parse_config(text).unwrap();
        let options = RunOptions {
            trace: true,
            dump_messages: true,
        };
        let bytes: Vec<Vec<u8>> = (0..2)
            .map(|_| {
                let result = run_experiment(&config, options).unwrap();
                let mut buf = Vec::new();
                write_runs(&mut buf, &result).unwrap();
                for rep in &result.replications {
                    buf.extend(rep.output.trace.as_deref().unwrap().as_bytes());
                }
                buf
            })
            .collect();
        assert_eq!(bytes[0], bytes[1]);
    }
}

#[test]
fn traces_and_dumps_land_in_subdirectories() {
    let config = parse_config(HOPPER).unwrap();
    let options = RunOptions {
        trace: true,
        dump_messages: true,
    };
    let result = run_experiment(&config, options).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_experiment(dir.path(), &result, &summarize(&result)).unwrap();
    let trace = std::fs::read_to_string(dir.path().join("trace/p3_r2.log")).unwrap();
    assert!(trace.lines().all(|l| l.split('\t').count() == 4));
    let dump = std::fs::read_to_string(dir.path().join("messages/p3_r2.log")).unwrap();
    assert!(dump.lines().any(|l| l.contains("EsReq")));
}
