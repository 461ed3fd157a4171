//! Command-line behaviour: exit codes, configuration layering, artifacts.

mod common;

use std::fs;
use std::path::Path;

use common::{mutag_dir, read, spgnn, stderr, stdout, write_separable, FIXTURE_FLAGS};
use spgnn::graph::{write_tu_dataset, Dataset, Graph};
use spgnn::pool::parse_selection_csv;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stats_prints_mutag_row() {
    let data = mutag_dir();
    let o = spgnn(&[
        "stats",
        "--dataset",
        "MUTAG",
        "--data-dir",
        s(&data),
        "--csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("MUTAG,188,28,17.93,19.79,7,2,"), "{row}");

    let table = stdout(&spgnn(&[
        "stats",
        "--dataset",
        "MUTAG",
        "--data-dir",
        s(&data),
    ]));
    assert!(table.contains("17.93") && table.contains("188"));
}

#[test]
fn stats_on_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let graphs = vec![
        Graph::from_edges(3, &[(0, 1), (1, 2)], vec![0, 1, 0], 2, 0).unwrap(),
        Graph::from_edges(2, &[(0, 1)], vec![1, 1], 2, 1).unwrap(),
    ];
    write_tu_dataset(
        &Dataset::new("FIX", graphs, 2, 2).unwrap(),
        dir.path().join("FIX"),
    )
    .unwrap();
    let o = spgnn(&[
        "stats",
        "--dataset",
        "FIX",
        "--data-dir",
        s(dir.path()),
        "--csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o).lines().nth(1).unwrap(),
        "FIX,2,3,2.50,1.50,2,2,1;1"
    );
}

#[test]
fn missing_dataset_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = spgnn(&["stats", "--dataset", "NOPE", "--data-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("NOPE"), "{}", stderr(&o));

    let o = spgnn(&["cv", "--dataset", "NOPE", "--data-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_separable(dir.path());
    let base = ["cv", "--dataset", "SEPARABLE", "--data-dir", s(&data)];

    let o = spgnn(&[&base[..], &["--conv", "transformer"]].concat());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("transformer"), "{}", stderr(&o));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "# comment\nepochs=1\nlearning_rate=0.1\n").unwrap();
    let o = spgnn(&[&base[..], &["--config", s(&cfg)]].concat());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));

    let o = spgnn(&[&base[..], &["--config", s(&dir.path().join("absent.cfg"))]].concat());
    assert_eq!(o.status.code(), Some(2));

    let o = spgnn(&[&base[..], &["--epochs", "20,10"]].concat());
    assert_eq!(o.status.code(), Some(2));

    let o = spgnn(&["cv", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_config_file_and_echo_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_separable(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "conv=normadj\npool=sortpool\nepochs=1,2\nlayers=2\nwidth=8\nk=10\nbatch_size=8\n",
    )
    .unwrap();
    let out = dir.path().join("a");
    let o = spgnn(&[
        "cv",
        "--config",
        s(&cfg),
        "--conv",
        "gin",
        "--dataset",
        "SEPARABLE",
        "--data-dir",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = read(out.join("config.txt"));
    assert!(echo.lines().any(|l| l == "conv=gin"), "{echo}");
    assert!(echo.lines().any(|l| l == "pool=sortpool"));
    assert!(echo.lines().any(|l| l == "epochs=1,2"));
    let kv = read(out.join("report.kv"));
    assert!(kv.lines().any(|l| l == "config.conv=gin"));
    assert!(kv.lines().any(|l| l == "config.pool=sortpool"));
    for f in [
        "report.txt",
        "epochs.csv",
        "checkpoints/fold0_epoch1",
        "checkpoints/fold9_epoch2",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    // The echo alone determines the run.
    let again = dir.path().join("b");
    let o = spgnn(&[
        "cv",
        "--config",
        s(&out.join("config.txt")),
        "--out",
        s(&again),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(again.join("report.kv")), kv);
    assert_eq!(read(again.join("epochs.csv")), read(out.join("epochs.csv")));
}

#[test]
fn ablation_rows_share_settings() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_separable(dir.path());
    let out = dir.path().join("abl");
    let o = spgnn(&[
        "ablate",
        "--dataset",
        "SEPARABLE",
        "--data-dir",
        s(&data),
        "--out",
        s(&out),
        "--epochs",
        "1",
        "--layers",
        "2",
        "--width",
        "8",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(out.join("ablation.csv"));
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    let names: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(
        names,
        [
            "SPGNN",
            "Architecture 1: proposed graph conv + sortpool",
            "Architecture 2: GIN graph conv + sortpool",
            "DGCNN"
        ]
    );
    assert!(rows.iter().all(|r| r[3] == "30" && r[4] == "1"));
    for (slug, conv, pool) in [
        ("spgnn", "catagg", "wlsortpool"),
        ("catagg_sortpool", "catagg", "sortpool"),
        ("gin_sortpool", "gin", "sortpool"),
        ("dgcnn", "normadj", "sortpool"),
    ] {
        let kv = read(out.join(slug).join("report.kv"));
        assert!(
            kv.contains(&format!("config.conv={conv}\n"))
                && kv.contains(&format!("config.pool={pool}\n"))
        );
        assert!(kv.contains("config.seed=0\n") && kv.contains("config.folds_seed=0\n"));
    }
}

#[test]
fn export_selection_writes_counts_and_top_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_separable(dir.path());
    let run = dir.path().join("run");
    let o = spgnn(
        &[
            &[
                "cv",
                "--dataset",
                "SEPARABLE",
                "--data-dir",
                s(&data),
                "--out",
                s(&run),
            ][..],
            &FIXTURE_FLAGS[..4],
            &[
                "--epochs", "2", "--layers", "3", "--width", "8", "--k", "10",
            ],
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let export = dir.path().join("export");
    let ck = run.join("checkpoints/fold0_epoch2");
    let o = spgnn(&[
        "export-selection",
        "--dataset",
        "SEPARABLE",
        "--data-dir",
        s(&data),
        "--checkpoint",
        s(&ck),
        "--out",
        s(&export),
        "--m",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let records = parse_selection_csv(&read(export.join("selection.csv"))).unwrap();
    assert_eq!(records.len(), 40);
    let top = read(export.join("top_nodes.txt"));
    for ((gid, counts), line) in records.iter().zip(top.lines()) {
        // Every graph has at most 12 < k + 3 nodes; those with n ≤ k keep
        // every node in each of the 3 layers.
        let n = counts.counts.len();
        if n <= 10 {
            assert!(counts.counts.iter().all(|&c| c == 3));
        }
        let (g, ids) = line.split_once(": ").unwrap();
        assert_eq!(g.parse::<usize>().unwrap(), *gid);
        assert_eq!(ids.split(' ').count(), 5.min(n));
    }
    assert_eq!(
        spgnn::pool::selection_csv(&records),
        read(export.join("selection.csv"))
    );
}

#[test]
fn export_selection_lists_ten_nodes_on_unlabelled_graphs() {
    // Node-label-free graphs of 14 nodes each, as in the social benchmarks.
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("SOCIAL");
    fs::create_dir_all(&ds).unwrap();
    let (mut a, mut ind, mut gl) = (String::new(), String::new(), String::new());
    for g in 0..20 {
        let off = g * 14;
        for i in 0..14 {
            ind.push_str(&format!("{}\n", g + 1));
            for j in i + 1..14 {
                if (i * 7 + j * 3 + g) % 4 == 0 {
                    a.push_str(&format!(
                        "{}, {}\n{}, {}\n",
                        off + i + 1,
                        off + j + 1,
                        off + j + 1,
                        off + i + 1
                    ));
                }
            }
        }
        gl.push_str(&format!("{}\n", g % 2));
    }
    fs::write(ds.join("SOCIAL_A.txt"), a).unwrap();
    fs::write(ds.join("SOCIAL_graph_indicator.txt"), ind).unwrap();
    fs::write(ds.join("SOCIAL_graph_labels.txt"), gl).unwrap();

    let run = dir.path().join("run");
    let o = spgnn(&[
        "cv",
        "--dataset",
        "SOCIAL",
        "--data-dir",
        s(dir.path()),
        "--out",
        s(&run),
        "--epochs",
        "1",
        "--layers",
        "2",
        "--width",
        "8",
        "--k",
        "12",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let export = dir.path().join("export");
    let o = spgnn(&[
        "export-selection",
        "--dataset",
        "SOCIAL",
        "--data-dir",
        s(dir.path()),
        "--checkpoint",
        s(&run.join("checkpoints/fold3_epoch1")),
        "--out",
        s(&export),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let top = read(export.join("top_nodes.txt"));
    assert_eq!(top.lines().count(), 20);
    assert!(top
        .lines()
        .all(|l| l.split_once(": ").unwrap().1.split(' ').count() == 10));
}

#[test]
fn export_selection_without_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_separable(dir.path());
    let o = spgnn(&[
        "export-selection",
        "--dataset",
        "SEPARABLE",
        "--data-dir",
        s(&data),
        "--checkpoint",
        s(&dir.path().join("nope")),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"));
}
