//! End-to-end command-line runs: the synthgen -> pretrain -> zeroshot ->
//! finetune -> incremental -> score -> report chain, determinism, and the
//! documented exit codes (2 config, 3 data).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn prerec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prerec"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn prerec");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

/// Extracts the path printed after a `label: ` prefix.
fn printed_path(out: &Output, label: &str) -> PathBuf {
    let text = stdout_of(out);
    let line = text
        .lines()
        .find(|l| l.starts_with(label))
        .unwrap_or_else(|| panic!("no `{label}` line in output:\n{text}"));
    PathBuf::from(line[label.len()..].trim())
}

fn write_base_config(dir: &Path) -> PathBuf {
    let config = serde_json::json!({
        "seed": 5,
        "interval_days": 15.0,
        "model": {
            "embed_dim": 8,
            "layers": 1,
            "heads": 2,
            "max_seq_len": 8,
            "lambda_u": 0.0,
            "lambda_v": 100.0,
            "lambda_d": 0.3,
            "lambda_z": 100.0,
            "negatives": 15,
            "seed": 5,
            "encoder": "transformer",
            "pop_activation": "tanh",
            "free_z_offsets": false,
            "free_u_offsets": false,
            "use_domain_bias": true,
            "use_popularity": true
        },
        "train": {
            "learning_rate": 0.002,
            "batch_size": 32,
            "max_epochs": 2,
            "patience": 2,
            "weight_decay": 0.0,
            "seed": 5,
            "metric": { "a": 2.0, "b": 15000.0, "k_pct": 10.0 }
        },
        "metric": { "a": 2.0, "b": 15000.0, "k_pct": 10.0 },
        "output_dir": dir.join("runs"),
        "synth": {
            "domains": 3,
            "items_per_domain": 24,
            "users_per_domain": 60,
            "embed_dim": 8,
            "seq_len_min": 4,
            "seq_len_max": 8,
            "domain_bias_scale": 1.2,
            "pop_boost_scale": 4.0,
            "pop_boost_fraction": 0.1,
            "pop_block_intervals": 4,
            "n_intervals": 8,
            "interval_secs": 1296000,
            "content_sharpness": 3.0,
            "seq_sharpness": 2.0
        }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

/// Generates the benchmark and returns the experiment config it wrote.
fn synthgen(dir: &Path) -> PathBuf {
    let cfg = write_base_config(dir);
    let data_dir = dir.join("data");
    let out = run_ok(
        prerec()
            .arg("synthgen")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&data_dir),
    );
    printed_path(&out, "experiment config: ")
}

#[test]
fn full_pipeline_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = synthgen(tmp.path());

    let out = run_ok(prerec().arg("pretrain").arg("--config").arg(&exp));
    let ckpt = printed_path(&out, "checkpoint: ");
    assert!(ckpt.exists());
    let train_log = ckpt.parent().unwrap().join("train_log.jsonl");
    let log_text = std::fs::read_to_string(&train_log).unwrap();
    assert!(log_text.lines().count() >= 1);
    let first: serde_json::Value = serde_json::from_str(log_text.lines().next().unwrap()).unwrap();
    for key in ["epoch", "train_loss", "val_r_ndcg", "wallclock_s"] {
        assert!(first.get(key).is_some(), "missing {key} in train log");
    }

    // Zero-shot evaluation writes all + unseen reports.
    let out = run_ok(
        prerec()
            .arg("zeroshot")
            .arg("--config")
            .arg(&exp)
            .arg("--checkpoint")
            .arg(&ckpt),
    );
    let zs_reports = printed_path(&out, "reports: ");
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&zs_reports).unwrap()).unwrap();
    let rows = reports.as_array().unwrap();
    assert_eq!(rows.len(), 2, "expected all + unseen rows");
    assert_eq!(rows[0]["test_type"], "all");
    assert_eq!(rows[1]["test_type"], "unseen");
    assert!(!rows[0]["fingerprint"].as_str().unwrap().is_empty());
    let zs_all_ndcg = rows[0]["r_ndcg"].as_f64().unwrap();
    let csv = std::fs::read_to_string(zs_reports.with_file_name("reports.csv")).unwrap();
    assert!(csv.starts_with("scenario,dataset,metric,test_type,model,value"));

    // Fine-tune from the checkpoint.
    let out = run_ok(
        prerec()
            .arg("finetune")
            .arg("--config")
            .arg(&exp)
            .arg("--checkpoint")
            .arg(&ckpt),
    );
    let ft_ckpt = printed_path(&out, "checkpoint: ");
    assert!(ft_ckpt.exists());

    // Incremental learning curve anchored at zero.
    let out = run_ok(
        prerec()
            .arg("incremental")
            .arg("--config")
            .arg(&exp)
            .arg("--checkpoint")
            .arg(&ckpt)
            .arg("--sizes")
            .arg("0,40"),
    );
    let inc_reports = printed_path(&out, "reports: ");
    let inc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&inc_reports).unwrap()).unwrap();
    let inc_rows = inc.as_array().unwrap();
    assert_eq!(inc_rows.len(), 2);
    // The size-0 anchor equals the zero-shot evaluation.
    let anchor = inc_rows[0]["r_ndcg"].as_f64().unwrap();
    assert!(
        (anchor - zs_all_ndcg).abs() < 1e-12,
        "anchor {anchor} vs zero-shot {zs_all_ndcg}"
    );

    // Batch scoring.
    let requests = tmp.path().join("requests.jsonl");
    std::fs::write(
        &requests,
        "{\"user_id\":\"probe\",\"history\":[\"syn2_i00001\",\"syn2_i00003\"],\"time\":6000000}\n",
    )
    .unwrap();
    let out = run_ok(
        prerec()
            .arg("score")
            .arg("--config")
            .arg(&exp)
            .arg("--checkpoint")
            .arg(&ckpt)
            .arg("--requests")
            .arg(&requests),
    );
    let rankings = printed_path(&out, "rankings: ");
    let line = std::fs::read_to_string(&rankings).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(parsed["user_id"], "probe");
    let ranked = parsed["ranked"].as_array().unwrap();
    assert!(!ranked.is_empty());
    assert_eq!(ranked.len(), parsed["scores"].as_array().unwrap().len());

    // Merge the zero-shot and incremental reports.
    let merged = tmp.path().join("merged.csv");
    run_ok(
        prerec()
            .arg("report")
            .arg(&zs_reports)
            .arg(&inc_reports)
            .arg("--out")
            .arg(&merged),
    );
    let merged_csv = std::fs::read_to_string(&merged).unwrap();
    assert!(merged_csv.lines().count() >= 1 + 2 * 4);
    // Rows sorted by (dataset, model): constant dataset here, so model order.
    let models: Vec<&str> = merged_csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap())
        .collect();
    let mut sorted = models.clone();
    sorted.sort();
    assert_eq!(models, sorted, "CSV rows are not sorted by model");
}

#[test]
fn pretraining_is_deterministic_across_processes() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = synthgen(tmp.path());
    let final_val = |out: &Output| -> String {
        let ckpt = printed_path(out, "checkpoint: ");
        let log = std::fs::read_to_string(ckpt.parent().unwrap().join("train_log.jsonl")).unwrap();
        log.lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                format!("{}", v["val_r_ndcg"])
            })
            .collect::<Vec<_>>()
            .join(";")
    };
    let a = run_ok(prerec().arg("pretrain").arg("--config").arg(&exp));
    let b = run_ok(prerec().arg("pretrain").arg("--config").arg(&exp));
    assert_eq!(final_val(&a), final_val(&b));
}

#[test]
fn oracle_ranker_reports_perfect_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = synthgen(tmp.path());
    let out = run_ok(
        prerec()
            .arg("zeroshot")
            .arg("--config")
            .arg(&exp)
            .arg("--model-kind")
            .arg("oracle"),
    );
    let reports = printed_path(&out, "reports: ");
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&reports).unwrap()).unwrap();
    for row in rows.as_array().unwrap() {
        assert_eq!(row["recall"].as_f64().unwrap(), 1.0);
        assert_eq!(row["r_ndcg"].as_f64().unwrap(), 1.0);
    }
}

#[test]
fn missing_embedding_manifest_exits_with_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = synthgen(tmp.path());
    // Break the manifest path in the experiment config.
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&exp).unwrap()).unwrap();
    let missing = tmp.path().join("nowhere/embeddings.json");
    cfg["sources"][0]["embeddings"] = serde_json::json!(missing);
    let broken = tmp.path().join("broken.json");
    std::fs::write(&broken, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = prerec()
        .arg("pretrain")
        .arg("--config")
        .arg(&broken)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nowhere"), "stderr: {stderr}");
}

#[test]
fn invalid_metric_config_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = synthgen(tmp.path());
    let out = prerec()
        .arg("zeroshot")
        .arg("--config")
        .arg(&exp)
        .arg("--k-pct")
        .arg("0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zeroshot_without_sources_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = synthgen(tmp.path());
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&exp).unwrap()).unwrap();
    cfg["sources"] = serde_json::json!([]);
    let no_sources = tmp.path().join("no_sources.json");
    std::fs::write(&no_sources, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = prerec()
        .arg("zeroshot")
        .arg("--config")
        .arg(&no_sources)
        .arg("--model-kind")
        .arg("random")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("source"), "stderr: {stderr}");
}

#[test]
fn synthetic_generation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_base_config(tmp.path());
    let d1 = tmp.path().join("a");
    let d2 = tmp.path().join("b");
    for d in [&d1, &d2] {
        run_ok(
            prerec()
                .arg("synthgen")
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(d),
        );
    }
    let a = std::fs::read(d1.join("interactions.csv")).unwrap();
    let b = std::fs::read(d2.join("interactions.csv")).unwrap();
    assert_eq!(a, b);
    let ea = std::fs::read(d1.join("embeddings.bin")).unwrap();
    let eb = std::fs::read(d2.join("embeddings.bin")).unwrap();
    assert_eq!(ea, eb);
}

#[test]
fn report_refuses_mismatched_metric_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let make_report = |k: f64, path: &Path| {
        let row = serde_json::json!([{
            "dataset": "d",
            "model": "m",
            "test_type": "all",
            "k_pct": k,
            "a": 2.0,
            "b": 15000.0,
            "n_items": 10,
            "events": 1,
            "recall": 0.5,
            "r_ndcg": 0.5,
            "fingerprint": "f"
        }]);
        std::fs::write(path, serde_json::to_string(&row).unwrap()).unwrap();
    };
    let r1 = tmp.path().join("r1.json");
    let r2 = tmp.path().join("r2.json");
    make_report(0.5, &r1);
    make_report(0.04, &r2);
    let out = prerec()
        .arg("report")
        .arg(&r1)
        .arg(&r2)
        .arg("--out")
        .arg(tmp.path().join("merged.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatched"));
}

#[test]
fn embed_encodes_catalog_texts_through_the_remote_encoder() {
    use std::io::{Read, Write as _};
    // A minimal encoder endpoint: always responds with 3-dim vectors.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/encode", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut buf = Vec::new();
            let mut tmp = [0u8; 4096];
            let body_start = loop {
                match stream.read(&mut tmp) {
                    Ok(0) => return,
                    Ok(k) => buf.extend_from_slice(&tmp[..k]),
                    Err(_) => return,
                }
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break pos;
                }
            };
            let header = String::from_utf8_lossy(&buf[..body_start]).to_string();
            let len: usize = header
                .lines()
                .find_map(|l| {
                    l.to_ascii_lowercase()
                        .strip_prefix("content-length:")
                        .map(|v| v.trim().to_string())
                })
                .and_then(|v| v.parse().ok())
                .unwrap_or(0);
            while buf.len() < body_start + 4 + len {
                match stream.read(&mut tmp) {
                    Ok(0) => break,
                    Ok(k) => buf.extend_from_slice(&tmp[..k]),
                    Err(_) => return,
                }
            }
            let body: serde_json::Value =
                serde_json::from_slice(&buf[body_start + 4..body_start + 4 + len]).unwrap();
            let n = body["texts"].as_array().unwrap().len();
            let vectors: Vec<Vec<f32>> = (0..n).map(|i| vec![i as f32, 1.0, 2.0]).collect();
            let payload = serde_json::json!({ "vectors": vectors }).to_string();
            let resp = format!(
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });

    let tmp = tempfile::tempdir().unwrap();
    let catalog = tmp.path().join("catalog.jsonl");
    std::fs::write(
        &catalog,
        "{\"item_id\":\"a\",\"domain_id\":\"d\",\"text\":\"first thing\"}\n\
         {\"item_id\":\"b\",\"domain_id\":\"d\",\"text\":\"second thing\"}\n",
    )
    .unwrap();
    let manifest = tmp.path().join("emb/d.json");
    let config = serde_json::json!({
        "seed": 1,
        "output_dir": tmp.path().join("runs"),
        "sources": [{
            "domain_id": "d",
            "interactions": tmp.path().join("unused.csv"),
            "catalog": catalog,
            "embeddings": manifest
        }],
        "encoder": {
            "endpoint": endpoint,
            "max_batch": 8,
            "max_retries": 1,
            "backoff_ms": 5,
            "cache_dir": tmp.path().join("cache"),
            "timeout_ms": 5000
        }
    });
    let cfg_path = tmp.path().join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string(&config).unwrap()).unwrap();
    run_ok(prerec().arg("embed").arg("--config").arg(&cfg_path));
    let table = prerec::embedding::EmbeddingTable::load(&manifest).unwrap();
    assert_eq!(table.len(), 2);
    assert_eq!(table.dim(), 3);
    assert_eq!(table.get("a").unwrap(), &[0.0, 1.0, 2.0]);
}

#[test]
fn help_documents_every_subcommand() {
    let out = run_ok(prerec().arg("--help"));
    let text = stdout_of(&out);
    for sub in [
        "pretrain",
        "zeroshot",
        "finetune",
        "incremental",
        "synthgen",
        "embed",
        "score",
        "report",
    ] {
        assert!(text.contains(sub), "--help is missing {sub}");
    }
}
