//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Runs against the `dce` binary with the built-in
//! deterministic provider; nothing here needs a model.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, ExitCode, Output, Stdio};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use dce_core::embed::DeterministicProvider;
use dce_core::search::{top_k, Modality, QueryVector};
use dce_core::{
    load_store, save_store, CollectionConfig, CollectionType, DataLayout, EmbeddingProvider, EmbeddingStore, ItemId,
    StoreError,
};
use dce_ingest::fixtures::{synthetic_image, synthetic_pdf};
use image::ImageFormat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_dce");

// embed_text("a") and embed_image(b"a") at D=4, as f32 bit patterns.
const GOLDEN_TEXT_A: [u32; 4] = [0xbf2329c7, 0x3e8a06de, 0x3f374c88, 0xbdbc0716];
const GOLDEN_IMAGE_A: [u32; 4] = [0xbdd63ba6, 0xbd6405a3, 0x3f1de203, 0xbf47386e];

type Check = fn(&Path) -> Result<String>;

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("tempdir");
    let root = root.path();
    let checks: [(&str, Check); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("pagination coherence over HTTP", pagination),
        ("store round-trip and fuzz", store_round_trip),
        ("deterministic provider golden vectors", golden_vectors),
        ("ingest tolerance", ingest_tolerance),
        ("PDF splitting", pdf_splitting),
        ("resume after kill", resume),
        ("scale proxy latency and concurrency", scale_proxy),
        ("self-retrieval", self_retrieval),
        ("asset path security", asset_security),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let dir = root.join(format!("c{}", i + 1));
        std::fs::create_dir_all(&dir).expect("check dir");
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&dir)))
            .unwrap_or_else(|panic| Err(anyhow::anyhow!("panicked: {}", panic_message(&panic))));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1}s): {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {e:#}", i + 1);
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(panic: &Box<dyn std::any::Any + Send>) -> String {
    panic
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

// ---------------------------------------------------------------- helpers

fn id(s: &str) -> ItemId {
    ItemId::parse(s).unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<f32> {
    (0..rows * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// Write `config.json` and an empty layout under `dir`.
fn new_collection(dir: &Path, dim: usize, tweak: impl FnOnce(&mut CollectionConfig)) -> Result<DataLayout> {
    let mut config = CollectionConfig::new(CollectionType::Photographs, dim);
    tweak(&mut config);
    dce_core::config::save_config(&config, &dir.join("config.json"))?;
    let layout = DataLayout::new(dir.join("data"));
    for sub in DataLayout::SUBDIRS {
        std::fs::create_dir_all(layout.root().join(sub))?;
    }
    Ok(layout)
}

fn dce(dir: &Path, args: &[&str]) -> Result<Output> {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env_remove("DCE_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .context("running dce")
}

fn last_json_line(out: &Output) -> Result<Value> {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).with_context(|| format!("stdout is not JSON: {text:?}"))
}

fn store_files(layout: &DataLayout) -> Result<(Vec<u8>, Vec<u8>)> {
    let dir = layout.embeddings_dir();
    Ok((
        std::fs::read(dir.join("embeddings.dce"))?,
        std::fs::read(dir.join("item_ids.json"))?,
    ))
}

struct Server {
    child: Child,
    addr: String,
    _stdout: BufReader<ChildStdout>,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Server {
    /// Start `dce serve --port 0`, pinned to one core when `taskset` exists,
    /// and wait until the store is loaded.
    fn start(dir: &Path, one_core: bool) -> Result<Self> {
        let serve = [BIN, "--json", "serve", "--host", "127.0.0.1", "--port", "0"];
        let use_taskset = one_core && Path::new("/usr/bin/taskset").exists();
        let mut cmd = if use_taskset {
            let mut c = Command::new("/usr/bin/taskset");
            c.args(["-c", "0"]).args(serve);
            c
        } else {
            let mut c = Command::new(BIN);
            c.args(&serve[1..]);
            c
        };
        let mut child = cmd
            .current_dir(dir)
            .env_remove("DCE_DATA_DIR")
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line)?;
        let info: Value = serde_json::from_str(&line).with_context(|| format!("listening line {line:?}"))?;
        let addr = info["listening"].as_str().context("no listening address")?.to_owned();
        let server = Self {
            child,
            addr,
            _stdout: stdout,
        };
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            if let Ok(res) = reqwest::blocking::get(server.url("/api/health")) {
                if res.status() == 200 {
                    return Ok(server);
                }
            }
            ensure!(Instant::now() < deadline, "server never became ready");
            std::thread::sleep(Duration::from_millis(25));
        }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

fn get_json(client: &reqwest::blocking::Client, url: &str) -> Result<Value> {
    let res = client.get(url).send()?;
    let status = res.status();
    let body: Value = res.json()?;
    ensure!(status == 200, "{url} returned {status}: {body}");
    Ok(body)
}

fn result_ids(page: &Value) -> Vec<String> {
    page["results"]
        .as_array()
        .map(|rs| {
            rs.iter()
                .map(|r| r["id"].as_str().unwrap_or_default().to_owned())
                .collect()
        })
        .unwrap_or_default()
}

// ------------------------------------------------------------- criteria

fn oracle_equivalence(_: &Path) -> Result<String> {
    const N: usize = 10_000;
    const D: usize = 64;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dce_0001);
    let ids: Vec<ItemId> = (0..N).map(|i| id(&format!("set/{:05}.jpg", (i * 7919) % N))).collect();
    let store = EmbeddingStore::from_unnormalized(D, ids, random_rows(&mut rng, N, D))?;

    let mut worst = 0.0f64;
    let mut search_secs = 0.0;
    for q in 0..100 {
        let query = QueryVector::normalize(random_rows(&mut rng, 1, D), Modality::Text)?;
        let t = Instant::now();
        let page = top_k(&store, &query, 50, 0, 100)?;
        search_secs += t.elapsed().as_secs_f64();

        // Independent brute force: f64 dot products, full sort.
        let mut oracle: Vec<(f64, &str)> = store
            .rows()
            .zip(store.ids())
            .map(|(row, id)| {
                let s: f64 = row
                    .iter()
                    .zip(query.values())
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum();
                (s, id.as_str())
            })
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.as_bytes().cmp(b.1.as_bytes())));

        ensure!(page.total == N, "query {q}: total {} != {N}", page.total);
        ensure!(page.hits.len() == 50, "query {q}: {} hits", page.hits.len());
        for (rank, (hit, (score, oid))) in page.hits.iter().zip(&oracle).enumerate() {
            ensure!(
                hit.id.as_str() == *oid,
                "query {q} rank {rank}: got {} expected {oid}",
                hit.id
            );
            let err = (f64::from(hit.score) - score).abs();
            ensure!(err <= 1e-6, "query {q} rank {rank}: score error {err:e}");
            worst = worst.max(err);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    ensure!(elapsed < 10.0, "took {elapsed:.2}s");
    Ok(format!(
        "100 queries exact; max score error {worst:.1e}; top_k total {search_secs:.3}s, whole check {elapsed:.2}s"
    ))
}

fn pagination(dir: &Path) -> Result<String> {
    const D: usize = 16;
    let layout = new_collection(dir, D, |_| {})?;
    // Half the rows duplicate the other half so equal scores cross page boundaries.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dce_0002);
    let base = random_rows(&mut rng, 150, D);
    let vectors = [base.clone(), base].concat();
    let ids: Vec<ItemId> = (0..300)
        .map(|i| id(&format!("tie/{:03}{}.jpg", i % 150, if i < 150 { 'b' } else { 'a' })))
        .collect();
    save_store(
        &EmbeddingStore::from_unnormalized(D, ids, vectors)?,
        &layout.embeddings_dir(),
    )?;

    let server = Server::start(dir, false)?;
    let client = reqwest::blocking::Client::new();
    let mut checked = 0;
    for q in ["harbor at dusk", "a", "map of the coast", "12345"] {
        let page = |limit: usize, offset: usize| {
            get_json(
                &client,
                &server.url(&format!(
                    "/api/search/text?q={}&limit={limit}&offset={offset}",
                    q.replace(' ', "+")
                )),
            )
        };
        let pages = [page(20, 0)?, page(20, 20)?, page(20, 40)?];
        let whole = page(60, 0)?;
        let joined: Vec<Value> = pages
            .iter()
            .flat_map(|p| p["results"].as_array().cloned().unwrap_or_default())
            .collect();
        let expected = whole["results"].as_array().cloned().unwrap_or_default();
        ensure!(joined.len() == 60, "{q:?}: pages hold {} results", joined.len());
        ensure!(joined == expected, "{q:?}: concatenated pages differ from limit=60");
        for p in pages.iter().chain([&whole]) {
            ensure!(p["total"] == 300, "{q:?}: total {}", p["total"]);
        }
        let scores: Vec<f64> = expected
            .iter()
            .map(|r| r["score"].as_f64().unwrap_or(f64::NAN))
            .collect();
        ensure!(
            scores.windows(2).all(|w| w[0] >= w[1]),
            "{q:?}: scores not non-increasing"
        );
        checked += 1;
    }
    Ok(format!(
        "{checked} queries, pages of 20 at offsets 0/20/40 equal limit 60; total constant at 300"
    ))
}

fn store_round_trip(dir: &Path) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dce_0003);
    let mut file_trips = 0;
    let mut truncations = 0;
    let mut corruptions = 0;
    for case in 0..10_000usize {
        let rows = match case {
            0 => 0,
            _ => rng.random_range(0..=6),
        };
        let dim = match case {
            1 => 1,
            _ if rng.random_bool(0.2) => 1,
            _ => rng.random_range(1..=9),
        };
        let ids: Vec<ItemId> = (0..rows)
            .map(|r| match rng.random_range(0..3) {
                0 => id(&format!("c{case}/img{r}.jpg")),
                1 => id(&format!("c{case}/doc.pdf#page={}", r + 1)),
                _ => id(&format!("c{case}/ünï cødé {r}.png")),
            })
            .collect();
        let mut vectors = random_rows(&mut rng, rows, dim);
        for v in vectors.iter_mut() {
            if *v == 0.0 {
                *v = 0.5;
            }
        }
        let store = EmbeddingStore::from_unnormalized(dim, ids, vectors)?;
        let bytes = store.encode();
        let id_bytes = store.encode_ids();

        let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<()> {
            let back = EmbeddingStore::decode(&bytes, &id_bytes, Some(dim))?;
            ensure!(back == store, "case {case}: decoded store differs");
            ensure!(back.encode() == bytes, "case {case}: re-encoding differs");
            if case % 50 == 0 {
                let sub = dir.join(format!("s{case}"));
                save_store(&store, &sub)?;
                let loaded = load_store(&sub, Some(dim))?;
                ensure!(
                    loaded.encode() == bytes && loaded.encode_ids() == id_bytes,
                    "case {case}: file round-trip"
                );
                file_trips += 1;
            }

            let short = &bytes[..bytes.len() - 1];
            match EmbeddingStore::decode(short, &id_bytes, None) {
                Err(StoreError::TruncatedHeader { .. } | StoreError::PayloadLength { .. }) => {}
                other => bail!("case {case}: 1-byte truncation gave {other:?}"),
            }
            let cut = rng.random_range(0..bytes.len());
            match EmbeddingStore::decode(&bytes[..cut], &id_bytes, None) {
                Err(StoreError::TruncatedHeader { .. } | StoreError::PayloadLength { .. }) => {}
                other => bail!("case {case}: truncation at {cut} gave {other:?}"),
            }
            truncations += 2;

            let mut bad = bytes.clone();
            bad[rng.random_range(0..4)] ^= rng.random_range(1..=255u8);
            match EmbeddingStore::decode(&bad, &id_bytes, None) {
                Err(StoreError::BadMagic { .. }) => {}
                other => bail!("case {case}: corrupted magic gave {other:?}"),
            }
            corruptions += 1;
            Ok(())
        }));
        match outcome {
            Ok(result) => result?,
            Err(panic) => bail!("case {case} panicked: {}", panic_message(&panic)),
        }
    }
    Ok(format!(
        "10000 stores bit-identical ({file_trips} via files); {truncations} truncations and {corruptions} magic corruptions all typed errors"
    ))
}

/// FNV-1a-64 and SplitMix64 written out again, independent of the crate.
fn reference_vector(prefix: u8, input: &[u8], dim: usize) -> Vec<u32> {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in std::iter::once(&prefix).chain(input) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut state = h;
    let draws: Vec<f64> = (0..dim)
        .map(|_| {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            (z >> 11) as f64 / 9007199254740992.0 * 2.0 - 1.0
        })
        .collect();
    let norm = draws.iter().map(|v| v * v).sum::<f64>().sqrt();
    draws.iter().map(|v| ((v / norm) as f32).to_bits()).collect()
}

fn golden_vectors(_: &Path) -> Result<String> {
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<u32>>();
    ensure!(
        reference_vector(0x01, b"a", 4) == GOLDEN_TEXT_A,
        "reference text vector disagrees with golden"
    );
    ensure!(
        reference_vector(0x02, b"a", 4) == GOLDEN_IMAGE_A,
        "reference image vector disagrees with golden"
    );

    let provider = DeterministicProvider::new(4)?;
    ensure!(
        bits(&provider.embed_text("a")?) == GOLDEN_TEXT_A,
        "in-process text vector"
    );
    ensure!(
        bits(&provider.embed_image(b"a")?) == GOLDEN_IMAGE_A,
        "in-process image vector"
    );

    let requests = concat!(
        r#"{"op":"info"}"#,
        "\n",
        r#"{"op":"embed_text","text":"a"}"#,
        "\n",
        r#"{"op":"embed_image","image_b64":"YQ=="}"#,
        "\n"
    );
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut child = Command::new(BIN)
            .args(["provider-stdio", "--dim", "4"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        child.stdin.take().unwrap().write_all(requests.as_bytes())?;
        let out = child.wait_with_output()?;
        ensure!(out.status.success(), "provider-stdio exited {:?}", out.status.code());
        let lines: Vec<Value> = String::from_utf8(out.stdout)?
            .lines()
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        ensure!(lines.len() == 3, "expected 3 responses, got {}", lines.len());
        ensure!(lines[0]["dim"] == 4, "info reported {}", lines[0]);
        let vector = |v: &Value| -> Result<Vec<u32>> {
            let arr = v["vector"].as_array().context("no vector")?;
            Ok(arr
                .iter()
                .map(|x| (x.as_f64().unwrap_or(f64::NAN) as f32).to_bits())
                .collect())
        };
        let text = vector(&lines[1])?;
        let image = vector(&lines[2])?;
        ensure!(text == GOLDEN_TEXT_A, "process text vector {text:08x?}");
        ensure!(image == GOLDEN_IMAGE_A, "process image vector {image:08x?}");
        runs.push((text, image));
    }
    ensure!(runs[0] == runs[1], "two processes disagree");
    Ok(
        "text and image vectors match golden bits in-process, in a reference implementation and in two fresh processes"
            .into(),
    )
}

/// 97 valid images in mixed formats and folders plus 3 corrupt files.
fn write_tolerance_corpus(raw: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut valid = Vec::new();
    for i in 0..97u64 {
        let (ext, format) = match i % 3 {
            0 => ("png", ImageFormat::Png),
            1 => ("jpg", ImageFormat::Jpeg),
            _ => ("jpeg", ImageFormat::Jpeg),
        };
        let rel = format!("set{}/img_{i:03}.{ext}", i % 4);
        let bytes = synthetic_image(i, 48 + (i as u32 % 5) * 8, 36, format);
        std::fs::create_dir_all(raw.join(&rel).parent().unwrap())?;
        std::fs::write(raw.join(&rel), &bytes)?;
        valid.push((rel, bytes));
    }
    let jpeg = synthetic_image(1000, 64, 48, ImageFormat::Jpeg);
    std::fs::write(raw.join("broken_truncated.jpg"), &jpeg[..jpeg.len() / 2])?;
    std::fs::write(raw.join("broken_garbage.png"), b"this is not a png at all")?;
    std::fs::write(raw.join("broken_empty.jpg"), b"")?;
    Ok(valid)
}

fn ingest_tolerance(dir: &Path) -> Result<String> {
    let layout = new_collection(dir, 32, |_| {})?;
    write_tolerance_corpus(&layout.raw_dir())?;
    let out = dce(dir, &["--json", "embed"])?;
    ensure!(
        out.status.code() == Some(0),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = last_json_line(&out)?;
    let report: Value = serde_json::from_slice(&std::fs::read(layout.report_path())?)?;
    let store = load_store(&layout.embeddings_dir(), Some(32))?;
    let n = |v: &Value, k: &str| v[k].as_u64().unwrap_or(u64::MAX);
    ensure!(store.len() == 97, "store has {} rows", store.len());
    for source in [&summary, &report] {
        ensure!(
            n(source, "items_failed") == 3,
            "items_failed {}",
            source["items_failed"]
        );
        ensure!(
            n(source, "items_embedded") == 97,
            "items_embedded {}",
            source["items_embedded"]
        );
        ensure!(
            n(source, "items_discovered") == n(source, "items_embedded") + n(source, "items_failed"),
            "discovered {} != embedded + failed",
            source["items_discovered"]
        );
    }
    let failed: HashSet<&str> = report["failures"]
        .as_array()
        .context("no failures list")?
        .iter()
        .filter_map(|f| f["source_path"].as_str())
        .collect();
    ensure!(
        failed.len() == 3 && failed.iter().all(|p| p.contains("broken_")),
        "failures {failed:?}"
    );
    Ok("store N=97, items_failed=3, discovered=100=97+3, exit 0".into())
}

fn pdf_splitting(dir: &Path) -> Result<String> {
    let layout = new_collection(dir, 16, |c| c.pdf_render_dpi = 72)?;
    std::fs::write(layout.raw_dir().join("doc.pdf"), synthetic_pdf(3))?;
    let out = dce(dir, &["embed"])?;
    ensure!(
        out.status.success(),
        "embed failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let store = load_store(&layout.embeddings_dir(), Some(16))?;
    let got: Vec<&str> = store.ids().iter().map(ItemId::as_str).collect();
    let expected = ["doc.pdf#page=1", "doc.pdf#page=2", "doc.pdf#page=3"];
    ensure!(got == expected, "ids {got:?}");
    for page in expected {
        let pid = id(page);
        let png = layout.page_image_path(&pid).context("no page path")?;
        let img = image::open(&png).with_context(|| format!("page image {}", png.display()))?;
        ensure!(
            (img.width(), img.height()) == (612, 792),
            "{page} is {}x{}",
            img.width(),
            img.height()
        );
        image::open(layout.thumbnail_path(&pid)).with_context(|| format!("thumbnail for {page}"))?;
    }
    let count = |d: PathBuf| std::fs::read_dir(d).map(|r| r.count()).unwrap_or(0);
    ensure!(
        count(layout.processed_dir()) == 3,
        "processed dir holds {} files",
        count(layout.processed_dir())
    );
    ensure!(
        count(layout.thumbnails_dir()) == 3,
        "thumbnails dir holds {} files",
        count(layout.thumbnails_dir())
    );
    Ok("ids doc.pdf#page=1..3, three 612x792 page images, three thumbnails".into())
}

fn resume(dir: &Path) -> Result<String> {
    let tweak = |c: &mut CollectionConfig| c.checkpoint_every = 100;
    let reference_dir = dir.join("reference");
    let killed_dir = dir.join("killed");
    std::fs::create_dir_all(&reference_dir)?;
    std::fs::create_dir_all(&killed_dir)?;
    let reference = new_collection(&reference_dir, 64, tweak)?;
    let killed = new_collection(&killed_dir, 64, tweak)?;
    for i in 0..1000u64 {
        let bytes = synthetic_image(
            i,
            320,
            240,
            if i % 2 == 0 {
                ImageFormat::Png
            } else {
                ImageFormat::Jpeg
            },
        );
        let name = format!(
            "batch{}/frame_{i:04}.{}",
            i / 250,
            if i % 2 == 0 { "png" } else { "jpg" }
        );
        for layout in [&reference, &killed] {
            let path = layout.raw_dir().join(&name);
            std::fs::create_dir_all(path.parent().unwrap())?;
            std::fs::write(path, &bytes)?;
        }
    }

    let out = dce(&reference_dir, &["embed"])?;
    ensure!(out.status.success(), "reference run failed");
    let expected = store_files(&reference)?;

    let mut child = Command::new(BIN)
        .current_dir(&killed_dir)
        .args(["embed", "--workers", "1"])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()?;
    let manifest = killed.manifest_path();
    let deadline = Instant::now() + Duration::from_secs(300);
    while !manifest.exists() {
        ensure!(
            child.try_wait()?.is_none(),
            "ingest finished before the first checkpoint"
        );
        ensure!(Instant::now() < deadline, "no checkpoint appeared");
        std::thread::sleep(Duration::from_millis(5));
    }
    std::thread::sleep(Duration::from_millis(150));
    ensure!(child.try_wait()?.is_none(), "ingest finished before it could be killed");
    child.kill()?;
    child.wait()?;

    let at_kill: Value = serde_json::from_slice(&std::fs::read(&manifest)?)?;
    let saved = at_kill["entries"].as_array().map_or(0, Vec::len);
    ensure!(saved < 1000, "manifest already complete at kill time");

    let out = dce(&killed_dir, &["--json", "embed"])?;
    ensure!(
        out.status.success(),
        "resumed run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = last_json_line(&out)?;
    let reused = summary["items_reused"].as_u64().unwrap_or(0);
    ensure!(
        reused >= saved as u64 && reused > 0,
        "resumed run reused {reused} of {saved} checkpointed items"
    );
    let resumed = store_files(&killed)?;
    ensure!(
        resumed.0 == expected.0,
        "embeddings.dce differs from the uninterrupted run"
    );
    ensure!(
        resumed.1 == expected.1,
        "item_ids.json differs from the uninterrupted run"
    );
    Ok(format!(
        "SIGKILL after {saved} of 1000 items checkpointed; rerun reused {reused} and matched the uninterrupted store byte for byte"
    ))
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn scale_proxy(dir: &Path) -> Result<String> {
    const N: usize = 100_000;
    const D: usize = 512;
    let layout = new_collection(dir, D, |_| {})?;
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0dce_0008);
        let ids: Vec<ItemId> = (0..N)
            .map(|i| id(&format!("scale/{:03}/item_{i:06}.jpg", i % 997)))
            .collect();
        let store = EmbeddingStore::from_unnormalized(D, ids, random_rows(&mut rng, N, D))?;
        save_store(&store, &layout.embeddings_dir())?;
    }
    let server = Server::start(dir, true)?;
    let client = reqwest::blocking::Client::new();
    let search = |q: &str| format!("/api/search/text?q={}&limit=20", q.replace(' ', "+"));

    for i in 0..10 {
        get_json(&client, &server.url(&search(&format!("warm up {i}"))))?;
    }
    let mut samples = Vec::with_capacity(300);
    for i in 0..300 {
        let url = server.url(&search(&format!("query number {i}")));
        let t = Instant::now();
        let page = get_json(&client, &url)?;
        samples.push(t.elapsed().as_secs_f64() * 1000.0);
        ensure!(
            page["total"] == N && result_ids(&page).len() == 20,
            "query {i}: bad page"
        );
    }
    samples.sort_by(f64::total_cmp);
    let median = percentile(&samples, 50.0);
    let p99 = percentile(&samples, 99.0);

    let queries: Vec<String> = (0..32).map(|i| format!("concurrent {i}")).collect();
    let serial: Vec<Value> = queries
        .iter()
        .map(|q| get_json(&client, &server.url(&search(q))))
        .collect::<Result<_>>()?;
    let barrier = Arc::new(Barrier::new(queries.len()));
    let handles: Vec<_> = queries
        .iter()
        .map(|q| {
            let url = server.url(&search(q));
            let barrier = barrier.clone();
            std::thread::spawn(move || {
                let client = reqwest::blocking::Client::new();
                barrier.wait();
                get_json(&client, &url)
            })
        })
        .collect();
    let mut mismatched = 0;
    for (handle, expected) in handles.into_iter().zip(&serial) {
        let got = handle.join().map_err(|_| anyhow::anyhow!("query thread panicked"))??;
        if &got != expected {
            mismatched += 1;
        }
    }
    ensure!(median < 250.0, "median {median:.1} ms");
    ensure!(p99 < 500.0, "p99 {p99:.1} ms");
    ensure!(
        mismatched == 0,
        "{mismatched} of 32 concurrent results differ from serial"
    );
    Ok(format!(
        "N=100000 D=512, 300 queries on one core: median {median:.1} ms, p99 {p99:.1} ms; 32 concurrent equal serial"
    ))
}

fn self_retrieval(dir: &Path) -> Result<String> {
    let layout = new_collection(dir, 64, |_| {})?;
    let valid = write_tolerance_corpus(&layout.raw_dir())?;
    let out = dce(dir, &["embed"])?;
    ensure!(out.status.success(), "embed failed");
    let server = Server::start(dir, false)?;
    let client = reqwest::blocking::Client::new();
    let mut worst = 0.0f64;
    for (rel, bytes) in &valid {
        let name = rel.rsplit('/').next().unwrap().to_owned();
        let form = reqwest::blocking::multipart::Form::new().part(
            "file",
            reqwest::blocking::multipart::Part::bytes(bytes.clone()).file_name(name),
        );
        let res = client
            .post(server.url("/api/search/image?limit=5"))
            .multipart(form)
            .send()?;
        ensure!(res.status() == 200, "{rel}: status {}", res.status());
        let page: Value = res.json()?;
        let top = &page["results"][0];
        ensure!(top["id"] == rel.as_str(), "{rel}: rank 0 is {}", top["id"]);
        let err = (top["score"].as_f64().unwrap_or(f64::NAN) - 1.0).abs();
        ensure!(err <= 1e-5, "{rel}: score off by {err:e}");
        worst = worst.max(err);
    }
    Ok(format!(
        "{} uploads each returned themselves at rank 0; max |score-1| {worst:.1e}",
        valid.len()
    ))
}

/// Minimal HTTP/1.1 GET that sends the path verbatim, so nothing between
/// the fuzzer and the server normalizes `..` or percent escapes.
fn raw_get(addr: &str, path: &str) -> Result<(u16, Vec<u8>)> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    write!(
        stream,
        "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )?;
    let mut response = Vec::new();
    stream.read_to_end(&mut response)?;
    let split = response
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .context("no header terminator")?;
    let head = String::from_utf8_lossy(&response[..split]).to_ascii_lowercase();
    let status: u16 = head.split_whitespace().nth(1).context("no status")?.parse()?;
    let mut body = response[split + 4..].to_vec();
    if head.contains("transfer-encoding: chunked") {
        body = dechunk(&body)?;
    }
    Ok((status, body))
}

fn dechunk(mut data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    loop {
        let end = data.windows(2).position(|w| w == b"\r\n").context("bad chunk")?;
        let size = usize::from_str_radix(std::str::from_utf8(&data[..end])?.trim(), 16)?;
        data = &data[end + 2..];
        if size == 0 {
            return Ok(out);
        }
        out.extend_from_slice(&data[..size]);
        data = &data[size + 2..];
    }
}

/// Contents of every regular file under `dir`, without following links.
fn regular_files(dir: &Path, out: &mut HashSet<Vec<u8>>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let kind = entry.file_type()?;
        if kind.is_dir() {
            regular_files(&entry.path(), out)?;
        } else if kind.is_file() {
            out.insert(std::fs::read(entry.path())?);
        }
    }
    Ok(())
}

fn asset_security(dir: &Path) -> Result<String> {
    let layout = new_collection(dir, 8, |_| {})?;
    let marker = b"OUTSIDE-DATA-DIR-4f1c9e";
    std::fs::write(dir.join("secret.jpg"), marker)?;
    std::fs::write(dir.join("secret.txt"), marker)?;
    std::fs::write(dir.join("data.jpg"), marker)?;

    let jpeg = synthetic_image(1, 32, 24, ImageFormat::Jpeg);
    let png = synthetic_image(2, 32, 24, ImageFormat::Png);
    std::fs::create_dir_all(layout.raw_dir().join("sub"))?;
    std::fs::create_dir_all(layout.thumbnails_dir().join("sub"))?;
    std::fs::write(layout.raw_dir().join("a.jpg"), &jpeg)?;
    std::fs::write(layout.raw_dir().join("sub/b.png"), &png)?;
    std::fs::write(layout.thumbnails_dir().join("a.jpg.jpg"), &jpeg)?;
    std::fs::write(layout.thumbnails_dir().join("sub/b.png.jpg"), &jpeg)?;
    std::fs::write(layout.processed_dir().join("doc.pdf__page_1.png"), &png)?;
    std::fs::write(layout.thumbnails_dir().join("doc.pdf__page_1.jpg"), &jpeg)?;
    let mut ids = vec!["a.jpg", "sub/b.png", "doc.pdf#page=1"];
    #[cfg(unix)]
    {
        // An item whose files are links pointing out of the data dir.
        std::os::unix::fs::symlink(dir.join("secret.jpg"), layout.raw_dir().join("link.jpg"))?;
        std::os::unix::fs::symlink(dir.join("secret.jpg"), layout.thumbnails_dir().join("link.jpg.jpg"))?;
        ids.push("link.jpg");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dce_0010);
    let store = EmbeddingStore::from_unnormalized(
        8,
        ids.iter().map(|s| id(s)).collect(),
        random_rows(&mut rng, ids.len(), 8),
    )?;
    save_store(&store, &layout.embeddings_dir())?;

    let mut allowed = HashSet::new();
    regular_files(layout.root(), &mut allowed)?;

    let server = Server::start(dir, false)?;
    const PARTS: &[&str] = &[
        "..",
        ".",
        "",
        "%2e%2e",
        "%2E%2E",
        ".%2e",
        "%2e.",
        "..%2f",
        "..%2F",
        "..%5c",
        "%5c",
        "%2f",
        "%252e%252e",
        "%c0%ae%c0%ae",
        "..;",
        "...",
        "....",
        "~",
        "%00",
        "a.jpg%00.png",
        "a.jpg",
        "sub",
        "b.png",
        "sub%2fb.png",
        "link.jpg",
        "secret.jpg",
        "secret.txt",
        "data.jpg",
        "data",
        "raw",
        "thumbnails",
        "processed",
        "embeddings",
        "config.json",
        "item_ids.json",
        "embeddings.dce",
        "doc.pdf%23page=1",
        "doc.pdf%23page=0",
        "doc.pdf%23page=..",
        "doc.pdf__page_1.png",
        "a.jpg.jpg",
        "etc",
        "passwd",
        "%2fetc%2fpasswd",
        "proc",
        "self",
        "environ",
        "C:",
        "%3f",
        "%23",
        "%20",
        "+",
        "%ff",
        "\u{00e9}",
    ];
    let mut escapes = Vec::new();
    let mut served = 0;
    let mut attempts = 0;
    while attempts < 10_000 {
        let prefix = if rng.random_bool(0.5) {
            "/images/"
        } else {
            "/thumbnails/"
        };
        let segments = rng.random_range(1..=6);
        let sep = |rng: &mut ChaCha8Rng| match rng.random_range(0..6) {
            0 => "%2f",
            1 => "//",
            2 => "%5c",
            _ => "/",
        };
        let mut path = String::from(prefix);
        if rng.random_bool(0.15) {
            path.push('/');
        }
        for s in 0..segments {
            if s > 0 {
                path.push_str(sep(&mut rng));
            }
            path.push_str(PARTS[rng.random_range(0..PARTS.len())]);
        }
        attempts += 1;
        let (status, body) = match raw_get(&server.addr, &path) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let leaked = body.windows(marker.len()).any(|w| w == marker) || body.windows(5).any(|w| w == b"root:");
        if leaked || (status == 200 && !allowed.contains(&body)) {
            escapes.push(path);
        } else if status == 200 {
            served += 1;
        }
    }
    // Legitimate requests still work, so the zero above is not vacuous.
    for path in [
        "/images/a.jpg",
        "/images/sub/b.png",
        "/thumbnails/doc.pdf%23page%3D1",
        "/images/doc.pdf%23page=1",
    ] {
        let (status, body) = raw_get(&server.addr, path)?;
        ensure!(status == 200 && allowed.contains(&body), "{path} returned {status}");
    }
    ensure!(
        escapes.is_empty(),
        "{} escapes, e.g. {:?}",
        escapes.len(),
        &escapes[..escapes.len().min(5)]
    );
    Ok(format!(
        "{attempts} fuzzed requests, 0 escapes ({served} legitimately served in-tree files)"
    ))
}
