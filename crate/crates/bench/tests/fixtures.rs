use snis::train::{noise_for, Trainer};
use snis_bench::{batches, config};

#[test]
fn fixtures_yield_full_batches_that_train() {
    let c = config(&[
        ("C", "300"),
        ("K", "16"),
        ("batch_size", "8"),
        ("criterion", "nce"),
    ]);
    assert_eq!(c.vocab_size, 300);
    let (corpus, bs) = batches(&c, 500);
    assert_eq!(corpus.len(), 500);
    assert!(!bs.is_empty() && bs.iter().all(|b| b.len() == 8));
    let mut trainer = Trainer::new(&c, noise_for(&c, &corpus).unwrap()).unwrap();
    assert!(trainer.step(&bs[0], 0, 0).unwrap().is_finite());
}

#[test]
#[should_panic(expected = "valid benchmark override")]
fn unknown_overrides_are_rejected() {
    config(&[("no_such_key", "1")]);
}
