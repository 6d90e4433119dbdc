//! Associative Recall instance generation: a list of base-10 items
//! separated by a delimiter, a queried item, and the subsequent item as the
//! answer.

use super::{AnswerStep, InstanceInfo, Query, RawProblem, TaskInstance, TaskKind, GENERATION_RETRIES};
use crate::error::{DncError, Result};
use crate::rng;
use rand_chacha::ChaCha8Rng;

pub(super) fn generate(
    items: (usize, usize),
    digits: (usize, usize),
    lesson_id: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TaskInstance> {
    let n = rng::uniform_range(rng, items.0, items.1);

    // Items are drawn without duplicates so "the subsequent item" is
    // unambiguous.
    let mut list: Vec<Vec<u8>> = Vec::with_capacity(n);
    let mut tries = 0;
    while list.len() < n {
        let d = rng::uniform_range(rng, digits.0, digits.1);
        let item: Vec<u8> = (0..d).map(|_| rng::uniform_range(rng, 0, 9) as u8).collect();
        if list.contains(&item) {
            tries += 1;
            if tries > GENERATION_RETRIES {
                return Err(DncError::Generation {
                    retries: tries,
                    reason: format!("cannot draw {n} distinct items with digits in {digits:?}"),
                });
            }
            continue;
        }
        list.push(item);
    }

    let q = rng::uniform_range(rng, 0, n - 2);
    let queried = list[q].clone();
    let mut target: Vec<AnswerStep> = list[q + 1].iter().map(|&d| AnswerStep::Digit(d)).collect();
    target.push(AnswerStep::Stop);

    let meta = InstanceInfo {
        n,
        nodes: None,
        edges: None,
        seed,
        lesson: lesson_id,
    };
    Ok(TaskInstance {
        kind: TaskKind::AssociativeRecall,
        seed,
        lesson: lesson_id,
        raw: RawProblem::Items { items: list },
        query: Query::Item { digits: queried },
        target,
        meta,
    })
}
