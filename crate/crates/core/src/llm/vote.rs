//! Vote-until-repeat: re-ask a categorical prompt until some option has
//! been produced twice.

pub const DEFAULT_VOTE_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteOutcome<T> {
    pub value: T,
    pub calls: u32,
    /// No option repeated within the budget; `value` is the modal answer.
    pub low_confidence: bool,
    pub malformed: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum VoteError<E> {
    #[error("max_attempts must be at least 2, got {0}")]
    BadBudget(u32),
    #[error("all {0} attempts produced malformed output")]
    AllMalformed(u32),
    #[error(transparent)]
    Call(E),
}

/// Invokes `call` until a value is seen twice, at most `max_attempts` times.
///
/// `call` returns `Ok(Some(v))` for a usable answer, `Ok(None)` for malformed
/// output (which still consumes an attempt) and `Err` for a hard failure,
/// which aborts the vote. Without a repeat the most frequent value wins,
/// ties going to the one observed first.
pub fn vote_until_repeat<T, E, F>(mut call: F, max_attempts: u32) -> Result<VoteOutcome<T>, VoteError<E>>
where
    T: PartialEq + Clone,
    F: FnMut() -> Result<Option<T>, E>,
{
    if max_attempts < 2 {
        return Err(VoteError::BadBudget(max_attempts));
    }
    let mut tally: Vec<(T, u32)> = Vec::new();
    let mut malformed = 0;
    for calls in 1..=max_attempts {
        let Some(value) = call().map_err(VoteError::Call)? else {
            malformed += 1;
            continue;
        };
        match tally.iter_mut().find(|(v, _)| *v == value) {
            Some(_) => {
                return Ok(VoteOutcome {
                    value,
                    calls,
                    low_confidence: false,
                    malformed,
                })
            }
            None => tally.push((value, 1)),
        }
    }
    let mut best: Option<&(T, u32)> = None;
    for entry in &tally {
        if best.map_or(true, |b| entry.1 > b.1) {
            best = Some(entry);
        }
    }
    match best {
        Some((value, _)) => Ok(VoteOutcome {
            value: value.clone(),
            calls: max_attempts,
            low_confidence: true,
            malformed,
        }),
        None => Err(VoteError::AllMalformed(max_attempts)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(seq: &[Option<char>], max: u32) -> (Result<VoteOutcome<char>, VoteError<()>>, usize) {
        let mut it = seq.iter().copied();
        let mut used = 0;
        let out = vote_until_repeat(
            || {
                used += 1;
                Ok(it.next().expect("script long enough"))
            },
            max,
        );
        (out, used)
    }

    #[test]
    fn repeat_on_second_call() {
        let (out, used) = run(&[Some('A'), Some('A')], 5);
        let out = out.unwrap();
        assert_eq!((out.value, out.calls, out.low_confidence), ('A', 2, false));
        assert_eq!(used, 2);
    }

    #[test]
    fn repeat_on_third_call() {
        let (out, used) = run(&[Some('A'), Some('B'), Some('B')], 5);
        let out = out.unwrap();
        assert_eq!((out.value, out.calls, out.low_confidence), ('B', 3, false));
        assert_eq!(used, 3);
    }

    #[test]
    fn no_repeat_falls_back_to_first_observed() {
        let seq: Vec<_> = "ABCDE".chars().map(Some).collect();
        let (out, used) = run(&seq, 5);
        let out = out.unwrap();
        assert_eq!((out.value, out.calls, out.low_confidence), ('A', 5, true));
        assert_eq!(used, 5);
    }

    #[test]
    fn malformed_consumes_attempts() {
        let (out, _) = run(&[None, Some('A'), None, Some('A')], 5);
        let out = out.unwrap();
        assert_eq!((out.value, out.calls, out.malformed), ('A', 4, 2));
        let (out, _) = run(&[None, None, None], 3);
        assert!(matches!(out, Err(VoteError::AllMalformed(3))));
        let (out, _) = run(&[None, Some('B'), None], 3);
        let out = out.unwrap();
        assert_eq!((out.value, out.low_confidence), ('B', true));
    }

    #[test]
    fn hard_errors_abort_and_budget_is_checked() {
        let out: Result<VoteOutcome<u8>, _> = vote_until_repeat(|| Err("down"), 5);
        assert!(matches!(out, Err(VoteError::Call("down"))));
        let (out, used) = run(&[Some('A')], 1);
        assert!(matches!(out, Err(VoteError::BadBudget(1))));
        assert_eq!(used, 0);
    }

    proptest! {
        #[test]
        fn call_count_bounds(seq in proptest::collection::vec(0u8..4, 8), max in 2u32..8) {
            let mut i = 0;
            let mut used = 0u32;
            let out = vote_until_repeat::<u8, (), _>(|| { used += 1; let v = seq[i]; i += 1; Ok(Some(v)) }, max).unwrap();
            prop_assert!(used <= max);
            prop_assert_eq!(used, out.calls);
            if seq[0] != seq[1] {
                prop_assert!(used >= 2.min(max));
                prop_assert!(used > 2 || out.low_confidence);
            }
            if !out.low_confidence {
                let seen = &seq[..used as usize];
                prop_assert_eq!(seen.iter().filter(|v| **v == out.value).count(), 2);
            }
        }
    }
}
