//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::Value;
use support::*;
use weave_core::registry::default_tools;
use weave_core::{
    admit_batches, derive_request_spec, plan, policy_for_tool, select_tier, to_canonical,
    BackendKind, Backends, BatchJob, CollectingSink, CostFactors, EventKind, ExecError, Executor,
    ExecutorConfig, Fault, HardwareProfile, MediaType, MemEstimate, Mode, Placement, PlanError,
    PlanId, Precision, Registry, RequestSpec, Store, Tier, TierThresholds, ToolKind, ToolSpec,
};
use weave_gateway::stub::{self, Stub};
use weave_gateway::{Gateway, GatewayConfig};

const JIG: &str = "compose a jig in G, 6/8 time, and let me hear it";

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- independent format readers -------------------------------------------

fn vlq(b: &[u8], i: &mut usize) -> Result<u32, String> {
    let mut v = 0u32;
    for _ in 0..4 {
        let byte = *b.get(*i).ok_or("truncated VLQ")?;
        *i += 1;
        v = (v << 7) | u32::from(byte & 0x7f);
        if byte & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err("VLQ longer than 4 bytes".into())
}

/// Every note-on has a later note-off on the same channel and key, and a
/// key is never switched on twice without an off in between. Returns the
/// number of notes.
fn smf_pairing(b: &[u8]) -> Result<usize, String> {
    ensure(b.starts_with(b"MThd"), || "missing MThd".into())?;
    let hlen = u32::from_be_bytes(b[4..8].try_into().unwrap()) as usize;
    let ntrks = u16::from_be_bytes([b[10], b[11]]);
    let mut at = 8 + hlen;
    let mut notes = 0;
    for _ in 0..ntrks {
        ensure(b.get(at..at + 4) == Some(b"MTrk"), || {
            format!("missing MTrk at {at}")
        })?;
        let len = u32::from_be_bytes(b[at + 4..at + 8].try_into().unwrap()) as usize;
        let trk = b.get(at + 8..at + 8 + len).ok_or("track overruns file")?;
        let mut open: BTreeSet<(u8, u8)> = BTreeSet::new();
        let (mut i, mut status) = (0usize, 0u8);
        let mut ended = false;
        while i < trk.len() {
            vlq(trk, &mut i)?;
            let mut s = trk[i];
            if s & 0x80 != 0 {
                i += 1;
                status = s;
            } else {
                s = status;
            }
            match s {
                0xff => {
                    let kind = trk[i];
                    i += 1;
                    let l = vlq(trk, &mut i)? as usize;
                    i += l;
                    if kind == 0x2f {
                        ended = true;
                    }
                }
                0xf0 | 0xf7 => {
                    let l = vlq(trk, &mut i)? as usize;
                    i += l;
                }
                _ => {
                    let (kind, ch) = (s & 0xf0, s & 0x0f);
                    let data = if matches!(kind, 0xc0 | 0xd0) { 1 } else { 2 };
                    let (key, vel) = (trk[i], if data == 2 { trk[i + 1] } else { 0 });
                    i += data;
                    match kind {
                        0x90 if vel > 0 => {
                            ensure(open.insert((ch, key)), || format!("key {key} on twice"))?;
                            notes += 1;
                        }
                        0x80 | 0x90 => ensure(open.remove(&(ch, key)), || {
                            format!("key {key} off without on")
                        })?,
                        _ => {}
                    }
                }
            }
        }
        ensure(ended, || "track lacks end-of-track".into())?;
        ensure(open.is_empty(), || format!("{} keys left on", open.len()))?;
        at += 8 + len;
    }
    Ok(notes)
}

/// (sample rate, channels) from a canonical RIFF/WAVE header.
fn wav_format(b: &[u8]) -> Result<(u32, u16), String> {
    ensure(
        b.len() >= 44 && &b[..4] == b"RIFF" && &b[8..12] == b"WAVE",
        || "not RIFF/WAVE".into(),
    )?;
    let mut at = 12;
    while at + 8 <= b.len() {
        let len = u32::from_le_bytes(b[at + 4..at + 8].try_into().unwrap()) as usize;
        if &b[at..at + 4] == b"fmt " {
            let f = &b[at + 8..];
            return Ok((
                u32::from_le_bytes(f[4..8].try_into().unwrap()),
                u16::from_le_bytes([f[2], f[3]]),
            ));
        }
        at += 8 + len + (len & 1);
    }
    Err("no fmt chunk".into())
}

// ---- criteria ---------------------------------------------------------------

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let t = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_weave"))
        .args(["ask", JIG, "--mode", "local", "--out"])
        .arg(&out)
        .env_remove("WEAVE_CACHE_DIR")
        .env_remove("WEAVE_TIER")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure(o.status.success(), || {
        format!(
            "exit {:?}: {}",
            o.status,
            String::from_utf8_lossy(&o.stderr)
        )
    })?;
    let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| format!("{f}: {e}"));

    let abc = String::from_utf8(read("tune.abc")?).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = abc.lines().map(str::trim).collect();
    ensure(lines.contains(&"K:G") && lines.contains(&"M:6/8"), || {
        format!("header lines missing:\n{abc}")
    })?;
    let tune = weave_symbolic::parse_abc(&abc).map_err(|d| format!("abc does not parse: {d:?}"))?;
    let problems = weave_symbolic::validate_tune(&tune);
    ensure(problems.is_empty(), || format!("abc invalid: {problems:?}"))?;

    let notes = smf_pairing(&read("tune.mid")?)?;
    ensure(notes > 0, || "no notes in SMF".into())?;
    let (rate, channels) = wav_format(&read("tune.wav")?)?;
    ensure((rate, channels) == (44_100, 2), || {
        format!("wav is {rate} Hz x {channels}")
    })?;
    let report: Value = serde_json::from_slice(&read("report.json")?).map_err(|e| e.to_string())?;
    ensure(report["verdict"]["status"] == "pass", || {
        format!("verdict {}", report["verdict"])
    })?;
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "K:G M:6/8, {notes} paired notes, 44100 Hz stereo, verdict pass in {} ms",
        elapsed.as_millis()
    ))
}

fn profile() -> HardwareProfile {
    HardwareProfile::new(4096, 16_384, 10_000)
}

fn run_jig(gw: &Arc<Gateway>) -> Result<BTreeMap<MediaType, Vec<u8>>, String> {
    let s = gw.create_session(None, None).map_err(|e| e.to_string())?;
    let (_, job) = gw.prepare(&s.id, JIG, &[]).map_err(|e| e.to_string())?;
    let report = job.run(&weave_core::NullSink).map_err(|e| e.to_string())?;
    report
        .final_artifacts
        .iter()
        .map(|(m, id)| {
            gw.artifact(id)
                .map(|a| (*m, a.bytes))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn cache_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = GatewayConfig {
        cache_dir: Some(dir.path().to_path_buf()),
        profile: profile(),
        ..GatewayConfig::default()
    };
    let first_gw = Gateway::new(cfg.clone()).map_err(|e| e.to_string())?;
    let first = run_jig(&first_gw)?;
    let cold = first_gw.backends().mock().call_count();
    drop(first_gw);
    let warm_gw = Gateway::new(cfg).map_err(|e| e.to_string())?;
    let second = run_jig(&warm_gw)?;
    let mock_calls = warm_gw.backends().mock().call_count();
    let invocations = warm_gw.backends().invocation_count();
    ensure(cold > 0, || "cold run made no mock calls".into())?;
    ensure(mock_calls == 0 && invocations == 0, || {
        format!("warm run: {mock_calls} mock calls, {invocations} invocations")
    })?;
    ensure(first == second, || "final artifacts differ".into())?;
    Ok(format!(
        "warm run: 0 mock calls, 0 invocations; {} final artifacts byte-identical",
        first.len()
    ))
}

const PARITY_SUITE: [&str; 10] = [
    JIG,
    "please hum quietly",
    "write a reel in D and show me the score",
    "analyze a waltz in F, 3/4 time",
    "a hornpipe in Bb at 140 bpm as midi",
    "let me hear a march under 20 seconds",
    "sheet music and audio for a polka in A",
    "describe a slip jig in E, 9/8 time",
    "a lullaby in the style of Brahms, play it",
    "score, midi, audio and an analysis of a strathspey in C",
];

fn mode_parity() -> Check {
    let stub_srv =
        stub::spawn(Arc::new(Stub::new(Registry::builtin()))).map_err(|e| e.to_string())?;
    let cfg = GatewayConfig {
        hosted_url: Some(stub_srv.url()),
        profile: profile(),
        ..GatewayConfig::default()
    };
    let gw = Gateway::new(cfg.clone()).map_err(|e| e.to_string())?;
    let local = gw
        .create_session(Some(Mode::Local), None)
        .map_err(|e| e.to_string())?;
    let hosted = gw
        .create_session(Some(Mode::Hosted), None)
        .map_err(|e| e.to_string())?;
    for text in PARITY_SUITE {
        let (a, _) = gw
            .prepare(&local.id, text, &[])
            .map_err(|e| format!("{text}: {e}"))?;
        let (b, _) = gw
            .prepare(&hosted.id, text, &[])
            .map_err(|e| format!("{text}: {e}"))?;
        let (ja, jb) = (to_canonical(&a.plan), to_canonical(&b.plan));
        ensure(ja == jb, || format!("{text:?}: plans differ\n{ja}\n{jb}"))?;
    }
    // and the hosted stand-in reproduces local bytes
    let hosted_gw = Gateway::new(GatewayConfig {
        mode: Mode::Hosted,
        ..cfg
    })
    .map_err(|e| e.to_string())?;
    let local_gw = Gateway::new(GatewayConfig {
        profile: profile(),
        ..GatewayConfig::default()
    })
    .map_err(|e| e.to_string())?;
    ensure(run_jig(&hosted_gw)? == run_jig(&local_gw)?, || {
        "hosted artifacts differ from local".into()
    })?;
    ensure(stub_srv.stub.requests() == 3, || {
        format!("stub saw {} requests", stub_srv.stub.requests())
    })?;
    Ok(format!(
        "{} requests, canonical plan JSON identical; hosted jig artifacts byte-identical",
        PARITY_SUITE.len()
    ))
}

fn planner_optimality() -> Check {
    let (mut compared, mut unplannable) = (0, 0);
    for seed in 0..2000u64 {
        let tier = [Tier::Low, Tier::Medium, Tier::High][(seed % 3) as usize];
        let mut rng = seeded(seed);
        let tools = random_tools(&mut rng, 6);
        let registry = registry_of(&tools);
        let mixed: BTreeSet<MediaType> = MEDIA[1..]
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.5))
            .collect();
        let mut goal_sets: Vec<BTreeSet<MediaType>> =
            MEDIA[1..].iter().map(|g| BTreeSet::from([*g])).collect();
        if mixed.len() > 1 {
            goal_sets.push(mixed);
        }
        for goals in goal_sets {
            let spec = RequestSpec::new(goals.clone(), MediaType::TEXT);
            let result = plan(
                &spec,
                &registry,
                tier,
                &HardwareProfile::a40(),
                &CostFactors::default(),
            );
            let oracle: Vec<_> = goals
                .iter()
                .map(|g| {
                    (
                        *g,
                        brute_force_path(&tools, MediaType::TEXT, *g, tier_permille(tier)),
                    )
                })
                .collect();
            if let Some((g, _)) = oracle.iter().find(|(_, o)| o.is_none()) {
                ensure(
                    matches!(&result, Err(PlanError::Unplannable { goal }) if goal == g),
                    || format!("seed {seed}: expected unplannable {g}, got {result:?}"),
                )?;
                unplannable += 1;
                continue;
            }
            let p = result.map_err(|e| format!("seed {seed}: {e}"))?;
            for (g, o) in oracle {
                let (cost, seq) = o.unwrap();
                let got = p.path_to(g).unwrap_or_default();
                let got_cost = (p.goal_cost(g).unwrap_or(f64::NAN) * 1000.0).round() as u64;
                ensure(got == seq && got_cost == cost, || {
                    format!("seed {seed} {g}: plan {got:?} @ {got_cost}, optimum {seq:?} @ {cost}")
                })?;
                compared += 1;
            }
        }
    }
    // equal-cost alternatives resolve to the smaller sequence
    let tie = [
        small_tool("b.direct", vec![MediaType::TEXT], MediaType::WAV, 4),
        small_tool("a.first", vec![MediaType::TEXT], MediaType::ABC, 2),
        small_tool("a.second", vec![MediaType::ABC], MediaType::WAV, 2),
    ];
    let p = plan(
        &RequestSpec::new([MediaType::WAV], MediaType::TEXT),
        &registry_of(&tie),
        Tier::Low,
        &HardwareProfile::a40(),
        &CostFactors::default(),
    )
    .map_err(|e| e.to_string())?;
    let path = p.path_to(MediaType::WAV).unwrap_or_default();
    ensure(path == ["a.first", "a.second"], || {
        format!("tie went to {path:?}")
    })?;
    Ok(format!(
        "2000 registries (<= 6 tools): {compared} planned goals equal the exhaustive optimum, {unplannable} unplannable requests agreed; ties lexicographic"
    ))
}

fn symbolic_oracle() -> Check {
    let doc: Value = serde_json::from_str(include_str!(
        "../../symbolic/tests/fixtures/abc_corpus.json"
    ))
    .map_err(|e| e.to_string())?;
    let tunes = doc["tunes"].as_array().ok_or("no tunes")?;
    ensure(tunes.len() >= 50, || format!("only {} tunes", tunes.len()))?;
    for t in tunes {
        let src = t["source"].as_str().unwrap_or("?");
        let abc = t["abc"].as_str().ok_or("tune without abc")?;
        let expected: Vec<(u32, u8, u32)> = t["events"]
            .as_array()
            .ok_or("tune without events")?
            .iter()
            .map(|e| {
                (
                    e[0].as_u64().unwrap() as u32,
                    e[1].as_u64().unwrap() as u8,
                    e[2].as_u64().unwrap() as u32,
                )
            })
            .collect();
        let tune = weave_symbolic::parse_abc(abc).map_err(|d| format!("{src}: {d:?}"))?;
        let got = weave_symbolic::abc_to_midi(&tune)
            .map_err(|e| format!("{src}: {e}"))?
            .notes();
        ensure(got == expected, || {
            format!("{src}: notes differ from the reference")
        })?;
        let again = weave_symbolic::parse_abc(&weave_symbolic::serialize_abc(&tune))
            .map_err(|d| format!("{src}: {d:?}"))?;
        ensure(again == tune, || {
            format!("{src}: round trip changed the tune")
        })?;
    }
    Ok(format!(
        "{} tunes match the reference converter; round trip is identity",
        tunes.len()
    ))
}

fn est_tool(int4: u64, int8: u64, fp16: u64) -> ToolSpec {
    ToolSpec {
        id: "model".into(),
        inputs: vec![MediaType::TEXT],
        output: MediaType::ABC,
        cost_estimate: 100,
        mem_estimate_mb: MemEstimate { int4, int8, fp16 },
        kind: ToolKind::Compose,
        backend: BackendKind::Mock,
        endpoint: None,
        supports_batching: false,
    }
}

fn rank(p: Precision) -> u8 {
    match p {
        Precision::Int4 => 0,
        Precision::Int8 => 1,
        Precision::Fp16 => 2,
    }
}

fn policy_table() -> Check {
    let th = TierThresholds::default();
    let at = |mb| select_tier(&HardwareProfile::new(mb, 65_536, 0), None, &th);
    let bounds = [
        (8191, Tier::Low),
        (8192, Tier::Medium),
        (24_575, Tier::Medium),
        (24_576, Tier::High),
    ];
    for (mb, want) in bounds {
        ensure(at(mb) == want, || {
            format!("{mb} MB -> {}, want {want}", at(mb))
        })?;
    }
    let small = est_tool(1000, 2000, 4000);
    let a40 = HardwareProfile::a40();
    for (tier, want) in [
        (Tier::Low, Precision::Int4),
        (Tier::Medium, Precision::Int8),
        (Tier::High, Precision::Fp16),
    ] {
        let p = policy_for_tool(tier, &small, &a40).map_err(|e| e.to_string())?;
        ensure(p.precision == want, || {
            format!("{tier} -> {:?}", p.precision)
        })?;
    }
    let fallback = policy_for_tool(
        Tier::High,
        &est_tool(15_000, 30_000, 60_000),
        &HardwareProfile::new(46_068, 65_536, 0),
    )
    .map_err(|e| e.to_string())?;
    ensure(
        (fallback.precision, fallback.placement) == (Precision::Int8, Placement::Accelerator),
        || {
            format!(
                "high fallback gave {:?}/{:?}",
                fallback.precision, fallback.placement
            )
        },
    )?;

    let mut rng = seeded(0x5eed);
    for n in 0..1000 {
        let i4 = rng.random_range(1..40_000u64);
        let i8 = i4 + rng.random_range(0..40_000u64);
        let f16 = i8 + rng.random_range(0..40_000u64);
        let prof = HardwareProfile::new(
            i8 + rng.random_range(0..80_000u64),
            f16 + rng.random_range(1..1000u64),
            0,
        );
        let t = est_tool(i4, i8, f16);
        let ranks: Vec<u8> = [Tier::Low, Tier::Medium, Tier::High]
            .iter()
            .map(|tier| policy_for_tool(*tier, &t, &prof).map(|p| rank(p.precision)))
            .collect::<Result<_, _>>()
            .map_err(|e| format!("sample {n}: {e}"))?;
        ensure(ranks.windows(2).all(|w| w[0] <= w[1]), || {
            format!("sample {n}: ranks {ranks:?} for {t:?} on {prof:?}")
        })?;
    }
    Ok("boundaries 8191/8192/24575/24576 and low/medium/high precision match; monotone over 1000 samples".into())
}

fn batching() -> Check {
    let mut rng = seeded(0xbea7);
    for n in 0..500 {
        let len = rng.random_range(0..=8);
        let sizes: Vec<u64> = (0..len).map(|_| rng.random_range(1..=20)).collect();
        let budget = sizes.iter().copied().max().unwrap_or(1) + rng.random_range(0..20);
        let jobs: Vec<BatchJob> = sizes
            .iter()
            .enumerate()
            .map(|(i, m)| BatchJob::new(format!("j{i}"), *m))
            .collect();
        let batches = admit_batches(&jobs, budget).map_err(|e| format!("list {n}: {e}"))?;
        for b in &batches {
            let sum: u64 = b.iter().map(|j| j.mem_mb).sum();
            ensure(!b.is_empty() && sum <= budget, || {
                format!("list {n}: batch of {sum} over {budget}")
            })?;
        }
        let mut packed: Vec<String> = batches.iter().flatten().map(|j| j.id.clone()).collect();
        packed.sort();
        let mut all: Vec<String> = jobs.iter().map(|j| j.id.clone()).collect();
        all.sort();
        ensure(packed == all, || format!("list {n}: not a partition"))?;
        let opt = brute_force_min_bins(&sizes, budget);
        ensure(batches.len() <= 2 * opt, || {
            format!("list {n}: {} batches, optimum {opt}", batches.len())
        })?;
    }
    Ok("500 lists: within budget, exact partition, <= 2x optimal batch count".into())
}

fn mock_executor() -> (Executor, Arc<weave_core::MockAdapter>) {
    let mut r = Registry::new();
    for mut t in default_tools() {
        t.backend = BackendKind::Mock;
        r.register(t).unwrap();
    }
    let mock = Arc::new(weave_core::MockAdapter::new());
    let backends = Arc::new(Backends::new(
        mock.clone(),
        Arc::new(weave_core::adapters::HttpAdapter::new(None)),
    ));
    let exec = Executor::new(
        Arc::new(Store::in_memory()),
        Arc::new(r),
        backends,
        ExecutorConfig::default(),
    );
    (exec, mock)
}

fn execute(
    exec: &Executor,
    text: &str,
) -> (
    Result<weave_core::ExecutionReport, ExecError>,
    Vec<weave_core::ProgressEvent>,
) {
    let spec = derive_request_spec(text, &[]).unwrap();
    let p = plan(
        &spec,
        exec.registry(),
        Tier::Low,
        &profile(),
        &CostFactors::default(),
    )
    .unwrap();
    let store = exec.store();
    let session = store.create_session(Mode::Local, None).unwrap().id;
    let src = store
        .put_artifact(text.as_bytes(), MediaType::TEXT, "user", &[])
        .unwrap();
    let sink = CollectingSink::default();
    let r = exec.execute_plan(&PlanId::fresh(), &p, &spec, &session, &src, &sink);
    (r, sink.events())
}

fn repair() -> Check {
    let (exec, mock) = mock_executor();
    mock.inject("compose.abc", Fault::fail_on([1]));
    let (r, events) = execute(&exec, JIG);
    let report = r.map_err(|e| format!("fail-once run: {e}"))?;
    let repairs = events
        .iter()
        .filter(|e| e.event == EventKind::Repair)
        .count();
    ensure(repairs == 1 && report.repairs.len() == 1, || {
        format!("{repairs} repair events")
    })?;
    ensure(report.verdict.passed(), || {
        "fail-once run did not pass".into()
    })?;

    let (exec, mock) = mock_executor();
    mock.inject("compose.abc", Fault::Always);
    let (r, events) = execute(&exec, JIG);
    match r {
        Err(ExecError::Failed {
            node_id, report, ..
        }) => {
            ensure(node_id == "n1" && !report.steps.is_empty(), || {
                format!("failed at {node_id}")
            })?;
            ensure(
                events.last().map(|e| e.event) == Some(EventKind::Error),
                || "last event is not error".into(),
            )?;
        }
        other => return Err(format!("fail-all run gave {other:?}")),
    }

    let ids: Vec<String> = default_tools().into_iter().map(|t| t.id).collect();
    let prompts = [
        JIG,
        "write a reel in D and show me the score",
        "analyze a waltz in F, 3/4",
        "let me hear a march",
    ];
    let mut rng = seeded(0xfa17);
    let (mut done, mut failed) = (0, 0);
    for run in 0..100 {
        let (exec, mock) = mock_executor();
        for id in &ids {
            let fault = match rng.random_range(0..6) {
                0 => Fault::fail_on([1]),
                1 => Fault::fail_on([1, 2]),
                2 => Fault::Always,
                3 => Fault::Garbage,
                4 => Fault::WrongKeyUntilFeedback,
                _ => continue,
            };
            mock.inject(id, fault);
        }
        let text = prompts[rng.random_range(0..prompts.len())];
        let outcome = catch_unwind(AssertUnwindSafe(|| execute(&exec, text)));
        let (r, events) = outcome.map_err(|_| format!("run {run} panicked"))?;
        let last = events.last().map(|e| e.event);
        match r {
            Ok(_) if last == Some(EventKind::Done) => done += 1,
            Err(ExecError::Failed { .. }) if last == Some(EventKind::Error) => failed += 1,
            other => return Err(format!("run {run}: {other:?} ending with {last:?}")),
        }
    }
    Ok(format!("fail-once: 1 repair, pass; fail-all: structured error; 100 injected runs ({done} done, {failed} failed), no crash"))
}

fn smf_golden() -> Check {
    use weave_symbolic::{write_smf, EventKind as Ev, MidiSequence, NoteEvent};
    let hex = |b: &[u8]| b.iter().map(|x| format!("{x:02X}")).collect::<String>();
    let header = "4D546864000000060000000101E0";
    let tempo = "00FF510307A120";
    let end = "00FF2F00";

    let got = hex(&write_smf(&MidiSequence::new(120)));
    let want = format!("{header}4D54726B0000000B{tempo}{end}");
    ensure(got == want, || format!("empty: {got}"))?;

    let mut one = MidiSequence::new(120);
    one.events.push(NoteEvent {
        tick: 0,
        kind: Ev::On,
        note: 60,
        velocity: 80,
    });
    one.events.push(NoteEvent {
        tick: 480,
        kind: Ev::Off,
        note: 60,
        velocity: 0,
    });
    let got = hex(&write_smf(&one));
    let want = format!("{header}4D54726B00000014{tempo}00903C508360803C00{end}");
    ensure(got == want, || format!("single note: {got}"))?;
    Ok("empty sequence and single middle-C quarter match golden bytes".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("end-to-end jig loop", end_to_end),
        ("cache round trip", cache_round_trip),
        ("mode parity", mode_parity),
        ("planner optimality", planner_optimality),
        ("symbolic oracle", symbolic_oracle),
        ("policy table", policy_table),
        ("batching", batching),
        ("repair", repair),
        ("smf golden bytes", smf_golden),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({ms} ms)"),
            Err(why) => {
                failures += 1;
                println!("FAIL {name}: {why} ({ms} ms)");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
