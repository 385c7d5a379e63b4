//! The Bayes-rule probability that an unobserved exposure is present, given
//! the surrogate, the outcome and the current parameters.
//!
//! With sensitivity and specificity 0.9, an even exposure prior,
//! `P(y=1 | x=1) = 0.8` and `P(y=1 | x=0) = 0.5`, a record with `x* = 1`,
//! `y = 1` has `P(x = 1) = 0.72 / 0.77 = 0.935`.

use misclass::data::ParticipantRecord;
use misclass::likelihood::logit;
use misclass::model::{preset, Family, ParamState};
use misclass::sampler::latent_x_full_conditional;

fn main() -> misclass::Result<()> {
    let spec = preset("eq1-2-3")?;
    let mut state = ParamState::with_exposures(1, 0, vec![false]);
    state.block_mut(Family::Lambda).intercept = logit(0.9);
    state.block_mut(Family::Phi).intercept = logit(0.1);
    state.block_mut(Family::Beta2).intercept = logit(0.8);

    for (xs, y) in [(true, true), (true, false), (false, true), (false, false)] {
        let rec = ParticipantRecord::new(0, y, None, Some(xs), vec![]);
        let p = latent_x_full_conditional(&state, &spec, &rec)?;
        println!("x*={} y={}  P(x=1 | rest) = {p:.4}", xs as u8, y as u8);
    }
    Ok(())
}
