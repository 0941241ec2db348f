use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

/// Maps `f` over `items` on up to `workers` threads; output is in input order.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let never = AtomicBool::new(false);
    parallel_map_cancellable(items, workers, &never, f)
        .into_iter()
        .map(|r| r.expect("not cancelled"))
        .collect()
}

/// Like [`parallel_map`], but stops handing out new items once `cancel` is set.
/// Items never started come back as `None`; started ones always finish.
pub fn parallel_map_cancellable<T, R, F>(items: &[T], workers: usize, cancel: &AtomicBool, f: F) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let n = items.len();
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        if cancel.load(Ordering::SeqCst) {
            break;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= n {
            break;
        }
        let r = f(i, &items[i]);
        *slots[i].lock().expect("result slot poisoned") = Some(r);
    };
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn order_is_preserved_under_uneven_delays() {
        let delays = [30u64, 1, 15, 2, 25, 0, 9];
        let out = parallel_map(&delays, 4, |i, d| {
            std::thread::sleep(Duration::from_millis(*d));
            i * 10
        });
        assert_eq!(out, vec![0, 10, 20, 30, 40, 50, 60]);
    }

    #[test]
    fn empty_input() {
        let out: Vec<u8> = parallel_map(&[] as &[u8], 3, |_, x| *x);
        assert!(out.is_empty());
    }

    #[test]
    fn cancellation_stops_new_work() {
        let cancel = AtomicBool::new(false);
        let items: Vec<usize> = (0..50).collect();
        let out = parallel_map_cancellable(&items, 1, &cancel, |i, _| {
            if i == 4 {
                cancel.store(true, Ordering::SeqCst);
            }
            i
        });
        assert_eq!(out.iter().flatten().count(), 5);
        assert!(out[5..].iter().all(Option::is_none));
    }
}
