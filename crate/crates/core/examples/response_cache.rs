//! A flaky backend behind retry-with-backoff and the content-addressed
//! response cache: transient failures are retried, and a repeated request is
//! answered from disk.
//!
//! cargo run --example response_cache

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use cantor::backends::{
    Backend, BackendError, BackendRequest, CachedBackend, MockBackend, ResponseCache, RetryPolicy, Retrying,
};
use cantor::domain::{RetryConfig, Sampling};
use cantor::prompting::RenderedPrompt;

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    let attempts = Arc::new(AtomicUsize::new(0));
    let counter = attempts.clone();
    let flaky = MockBackend::new("flaky").with_responder(move |_| {
        Some(if counter.fetch_add(1, Ordering::SeqCst) < 2 {
            Err(BackendError::Transient("HTTP 429".into()))
        } else {
            Ok("A bar chart with four bars.".into())
        })
    });
    let delays = Arc::new(Mutex::new(Vec::new()));
    let log = delays.clone();
    let retrying = Retrying::new(flaky, RetryPolicy::from(&RetryConfig::default()))
        .with_sleeper(Arc::new(move |d: Duration| log.lock().expect("lock").push(d)));

    let dir = tempfile::tempdir()?;
    let cache = Arc::new(ResponseCache::open(dir.path())?);
    let backend = CachedBackend::new(retrying, cache.clone());
    let request = BackendRequest::new(
        "demo-model",
        RenderedPrompt::text_only("[ChartSense Expert: What kind of chart is this?]"),
        Sampling::default(),
    );

    let first = backend.complete(&request)?;
    let second = backend.complete(&request)?;
    let stats = cache.stats()?;
    Ok(format!(
        "first: {:?} after {} attempts, backoff {:?}\nsecond: {:?} from {:?}\ncache: {} entr(ies) in {} shard(s), key {}\n",
        first.text,
        attempts.load(Ordering::SeqCst),
        delays.lock().expect("lock"),
        second.text,
        second.source,
        stats.entries,
        stats.shards,
        &request.cache_key()[..16],
    ))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
