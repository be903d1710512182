//! Content-addressed artifacts, memo entries and LRU eviction on disk.
//!
//! cargo run -p weave-core --example artifact_cache

use serde_json::json;
use weave_core::{policy_for_tool, HardwareProfile, MediaType, MemoKey, Registry, Store, Tier};

fn main() {
    let dir = std::env::temp_dir().join(format!("weave-cache-example-{}", std::process::id()));
    let store = Store::open(&dir).unwrap();
    let prompt = store
        .put_artifact(b"a jig in G", MediaType::TEXT, "user", &[])
        .unwrap();
    let again = store
        .put_artifact(b"a jig in G", MediaType::TEXT, "someone else", &[])
        .unwrap();
    assert_eq!(prompt, again);
    println!("prompt {prompt}");

    let abc = b"X:1\nT:jig\nM:6/8\nL:1/8\nK:G\nGAG GAB|]\n";
    let tune = store
        .put_artifact(abc, MediaType::ABC, "compose.abc", std::slice::from_ref(&prompt))
        .unwrap();
    let registry = Registry::builtin();
    let tool = registry.get("compose.abc").unwrap();
    let policy = policy_for_tool(Tier::Low, tool, &HardwareProfile::new(4096, 16_384, 0)).unwrap();
    let key = MemoKey::new(
        "compose.abc",
        std::slice::from_ref(&prompt),
        &json!({ "key_signature": "G" }),
        &policy,
    );
    store.memo_record(key.clone(), &tune).unwrap();
    drop(store);

    let reopened = Store::open(&dir).unwrap();
    println!("after reopen: memo hit {:?}", reopened.memo_lookup(&key));
    println!("stats {:?}", reopened.stats());
    let freed = reopened.evict(0).unwrap();
    println!(
        "evicted {freed} bytes; memo hit now {:?}",
        reopened.memo_lookup(&key)
    );
    std::fs::remove_dir_all(&dir).ok();
}
