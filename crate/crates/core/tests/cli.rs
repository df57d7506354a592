use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const USES: &str = "use_id\tlemma\tsentence\tperiod\tsplit
t1\tBehandlung\tDie Behandlung dauert.\t\ttrain
t2\tBehandlung\tEine gute Behandlung.\t\ttrain
t3\tAbend\tEin schöner Abend.\t\ttrain
t4\tMorgen\tGuten Morgen.\t\ttrain
t5\tBank\tAuf der Bank.\t\ttrain
v1\tAbend\tDer Abend kommt.\t\tval
v2\tKiefer\tDer Kiefer schmerzt.\t\tval
o1\tAbend\tAm Abend.\t1990s\ttest_overlap
o2\tMorgen\tBis Morgen.\t\ttest_overlap
o3\tKiefer\tDer Kiefer.\t\ttest_overlap
o4\tBank\tDie Bank.\t\ttest_overlap
n1\tSchloss\tDas Schloss.\t\ttest_no_overlap
";

const SIGNS: &str = r#"{"sign_id":"637","translations":["Behandlung","Therapie"]}
{"sign_id":"999","translations":["Umgang","Behandlung"]}
{"sign_id":"19","translations":["Abend"],"explanation":""}
{"sign_id":"20","translations":["Morgen"]}
{"sign_id":"21","translations":["Bank","Sitzbank"]}
"#;

const GOLD: &str = "use_id\tgold_sign_ids
t1\t637
t2\t999
t3\t19
t4\t20
t5\t21
v1\t19
v2\t
o1\t19
o2\t20
o3\t
o4\t
";

const TYPES: &str = "lemma\tgold_type
Behandlung\ttype1
Abend\ttype3
Morgen\ttype3
Kiefer\tno_match
Bank\ttype2
";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for (name, text) in [
            ("uses.tsv", USES),
            ("signs.jsonl", SIGNS),
            ("gold.tsv", GOLD),
            ("types.tsv", TYPES),
            ("pos.tsv", "lemma\tpos\nAbend\tnoun\nBank\tnoun\n"),
        ] {
            fs::write(dir.path().join(name), text).unwrap();
        }
        fs::write(
            dir.path().join("run.conf"),
            "uses=uses.tsv\nsigns=signs.jsonl\ngold=gold.tsv\ngold_types=types.tsv\nfallback_dim=64\nout=out\n",
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.path("out").join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut full = vec![args[0], "--config"];
        let config = self.path("run.conf");
        full.push(config.to_str().unwrap());
        full.extend(&args[1..]);
        Command::new(env!("CARGO_BIN_EXE_sensemap"))
            .args(full)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn assert_ok(output: &Output) {
    assert_eq!(
        code(output),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn retrieve_both_engines_writes_two_deterministic_dumps() {
    let ws = Workspace::new();
    let args = [
        "retrieve", "--engine", "both", "--tau", "0.3", "--topk", "3",
    ];
    assert_ok(&ws.run(&args));
    let em = read(&ws.out("retrieval_em_test_overlap.tsv"));
    let ss = read(&ws.out("retrieval_ss_test_overlap.tsv"));
    assert!(em.starts_with("use_id\tengine\trank\tsign_id\tscore\tsource_field\n"));
    assert!(em.contains("o1\tem\t1\t19\t"));
    // Kiefer overlaps no translation, so its EM result is empty.
    assert!(em.contains("o3\tem\t0\t\t\t\n"));
    assert!(ss
        .lines()
        .skip(1)
        .all(|l| l.split('\t').nth(1) == Some("ss")));

    assert_ok(&ws.run(&args));
    assert_eq!(read(&ws.out("retrieval_em_test_overlap.tsv")), em);
    assert_eq!(read(&ws.out("retrieval_ss_test_overlap.tsv")), ss);
}

#[test]
fn ss_without_tau_is_a_config_error() {
    let ws = Workspace::new();
    assert_eq!(
        code(&ws.run(&["retrieve", "--engine", "ss", "--topk", "3"])),
        2
    );
    assert_eq!(
        code(&ws.run(&["retrieve", "--engine", "em", "--tau", "1.5"])),
        2
    );
    assert_eq!(
        code(&ws.run(&["retrieve", "--engine", "em", "--split", "test"])),
        2
    );
    assert!(!ws.path("out").exists());
}

#[test]
fn missing_input_is_a_config_error_and_bad_data_is_a_data_error() {
    let ws = Workspace::new();
    let out = ws.run(&["stats", "--uses", "nowhere.tsv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.tsv"));

    fs::write(
        ws.path("bad.tsv"),
        "use_id\tlemma\tsentence\tperiod\tsplit\nx\tA\tB\t\tsomewhere\n",
    )
    .unwrap();
    let out = ws.run(&["stats", "--uses", "bad.tsv"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.tsv:2:"));
}

#[test]
fn evaluate_matches_hand_count() {
    let ws = Workspace::new();
    assert_ok(&ws.run(&["retrieve", "--engine", "em"]));
    let out = ws.run(&["evaluate", "--engine", "em", "--pos", "pos.tsv"]);
    assert_ok(&out);
    // o1 -> {19} and o2 -> {20} are right, o3 abstains correctly, o4 wrongly
    // returns the bench sign.
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("em: accuracy 75.00 (n=4)"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&read(&ws.out("report.json"))).unwrap();
    let accuracy = &report["engines"]["em"]["report"]["accuracy"];
    assert_eq!(accuracy["overall"]["correct"], 3);
    assert_eq!(accuracy["match"]["correct"], 2);
    assert_eq!(accuracy["match"]["total"], 2);
    assert_eq!(accuracy["no_match"]["correct"], 1);
    assert!(ws.out("overall.tsv").exists());
    assert!(ws.out("precision_at_k.tsv").exists());
    assert!(!ws.out("types_em_test_overlap.tsv").exists());

    let before = read(&ws.out("report.json"));
    assert_ok(&ws.run(&["evaluate", "--engine", "em", "--pos", "pos.tsv"]));
    assert_eq!(read(&ws.out("report.json")), before);
}

#[test]
fn evaluate_both_engines_with_types() {
    let ws = Workspace::new();
    let args = ["--engine", "both", "--tau", "0.5", "--topk", "3"];
    assert_ok(&ws.run(&[&["retrieve"][..], &args].concat()));
    let out = ws.run(&[&["evaluate", "--pos", "pos.tsv"][..], &args].concat());
    assert_ok(&out);
    for name in [
        "model.tsv",
        "per_type.tsv",
        "error_flow.tsv",
        "agreement_ss.tsv",
        "confusion_ss.tsv",
        "pos_ss.tsv",
        "types_ss_test_overlap.tsv",
    ] {
        assert!(ws.out(name).exists(), "{name} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&read(&ws.out("report.json"))).unwrap();
    let flow = &report["error_flow"];
    let cells: u64 = ["both_succeed", "ss_only", "em_only", "both_fail"]
        .iter()
        .map(|k| flow[k].as_u64().unwrap())
        .sum();
    assert_eq!(cells, 4);
    let agreement = &report["engines"]["ss"]["report"]["type_agreement"]["overall"];
    assert_eq!(agreement["total"], 4);
}

#[test]
fn evaluate_without_dump_or_gold_is_a_data_error() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["evaluate", "--engine", "em"])), 3);
    assert_ok(&ws.run(&["retrieve", "--engine", "em", "--split", "test_no_overlap"]));
    assert_eq!(
        code(&ws.run(&["evaluate", "--engine", "em", "--split", "test_no_overlap"])),
        3
    );
}

#[test]
fn tune_grids() {
    let ws = Workspace::new();
    let out = ws.run(&["tune", "--tau-grid", "0.4", "--k-grid", "2"]);
    assert_ok(&out);
    let table = read(&ws.out("tuning.tsv"));
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("0.40\t2\t"));
    assert!(table.ends_with("true\n"));

    assert_ok(&ws.run(&["tune"]));
    let table = read(&ws.out("tuning.tsv"));
    assert_eq!(table.lines().count(), 13);
    assert_eq!(table.lines().filter(|l| l.ends_with("\ttrue")).count(), 1);
}

#[test]
fn tune_without_validation_is_a_data_error() {
    let ws = Workspace::new();
    let uses: String = USES
        .lines()
        .filter(|l| !l.ends_with("\tval"))
        .map(|l| format!("{l}\n"))
        .collect();
    let gold: String = GOLD
        .lines()
        .filter(|l| !l.starts_with('v'))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(ws.path("uses.tsv"), uses).unwrap();
    fs::write(ws.path("gold.tsv"), gold).unwrap();
    fs::write(
        ws.path("types.tsv"),
        TYPES.replace("Kiefer\tno_match\n", ""),
    )
    .unwrap();
    fs::write(
        ws.path("uses.tsv"),
        read(&ws.path("uses.tsv")).replace("o3\tKiefer", "o3\tBank"),
    )
    .unwrap();
    assert_eq!(code(&ws.run(&["tune"])), 3);
}

#[test]
fn ablate_has_six_rows_and_blank_explanations_change_nothing() {
    let ws = Workspace::new();
    let out = ws.run(&["ablate", "--tau", "0.3", "--topk", "2"]);
    assert_ok(&out);
    let table = read(&ws.out("ablation.tsv"));
    let rows: Vec<Vec<&str>> = table
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for wug in ["word_only", "full_context", "sentence_only"] {
        let pick = |dgs: &str| {
            rows.iter()
                .find(|r| r[0] == wug && r[1] == dgs)
                .unwrap_or_else(|| panic!("{wug}/{dgs} missing"))[2..]
                .to_vec()
        };
        assert_eq!(pick("base"), pick("gt_only"), "{wug}");
    }
    let report: serde_json::Value = serde_json::from_str(&read(&ws.out("ablation.json"))).unwrap();
    assert_eq!(report["reports"].as_object().unwrap().len(), 6);
}

#[test]
fn stats_counts_every_split() {
    let ws = Workspace::new();
    let out = ws.run(&["stats"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("11 mappings, 6 words, 5 signs"), "{stdout}");
    assert!(ws.out("stats.tsv").exists());
}

#[test]
fn store_backed_retrieval_and_missing_vectors() {
    let ws = Workspace::new();
    let texts = [
        ("Abend", "1 0"),
        ("Morgen", "0 1"),
        ("Kiefer", "-1 0"),
        ("Bank", "0.6 0.8"),
        ("Behandlung", "0.2 -1"),
        ("Therapie", "0.3 -1"),
        ("Umgang", "-0.5 -0.5"),
        ("Sitzbank", "0.8 0.6"),
    ];
    let mut store = String::from("dim=2\tmodel=toy-model\n");
    for (key, vector) in texts {
        store.push_str(&format!("{key}\t{vector}\n"));
    }
    fs::write(ws.path("store.txt"), &store).unwrap();
    fs::write(
        ws.path("run.conf"),
        "uses=uses.tsv\nsigns=signs.jsonl\ngold=gold.tsv\nembeddings=store.txt\nout=out\nwug_mode=word_only\n",
    )
    .unwrap();
    let args = ["--engine", "ss", "--tau", "0.9", "--topk", "1"];
    assert_ok(&ws.run(&[&["retrieve"][..], &args].concat()));
    let dump = read(&ws.out("retrieval_ss_test_overlap.tsv"));
    assert!(
        dump.contains("o1\tss\t1\t19\t1.000000000\ttranslation\n"),
        "{dump}"
    );
    assert!(dump.contains("o3\tss\t0\t\t\t\n"), "{dump}");
    assert_ok(&ws.run(&[&["evaluate"][..], &args].concat()));
    assert!(read(&ws.out("model.tsv")).contains("toy-model"));

    // Full-context queries are not in the store.
    let out = ws.run(&[&["retrieve", "--wug-mode", "full_context"][..], &args].concat());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Abend [SEP]"));

    let out = ws.run(&[&["retrieve", "--fallback-dim", "8"][..], &args].concat());
    assert_eq!(code(&out), 2);
}
