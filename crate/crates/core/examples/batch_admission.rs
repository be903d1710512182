//! Packs jobs into memory-bounded batches, largest first.
//!
//! cargo run -p weave-core --example batch_admission

use weave_core::{admit_batches, BatchJob};

fn main() {
    let jobs: Vec<BatchJob> = [
        ("verse", 10),
        ("chorus", 7),
        ("bridge", 5),
        ("outro", 3),
        ("intro", 2),
    ]
    .into_iter()
    .map(|(id, mb)| BatchJob::new(id, mb))
    .collect();
    for budget in [10, 12, 27] {
        let batches = admit_batches(&jobs, budget).unwrap();
        println!("budget {budget} MB: {} batches", batches.len());
        for b in &batches {
            let ids: Vec<&str> = b.iter().map(|j| j.id.as_str()).collect();
            println!(
                "  {:>3} MB  {}",
                b.iter().map(|j| j.mem_mb).sum::<u64>(),
                ids.join(" ")
            );
        }
    }
    println!("{}", admit_batches(&jobs, 8).unwrap_err());
}
