use sigbasis::basis::is_basis_of_words;
use sigbasis::freealg::{dual_bracket, shuffle};
use sigbasis::io::{read_paths, write_binary, write_csv};
use sigbasis::signature::{brute_force_sig, sig_backward, sig_batch, sig_forward, Direction};
use sigbasis::stochastic::{gram_report, simulate, SdeSpec};
use sigbasis::words::{enumerate, words_of_length, WordClass};

#[test]
fn files_round_trip_into_identical_signatures() {
    let paths = simulate(&SdeSpec::ornstein_uhlenbeck(2, 1.0), 25, 6, 11).unwrap();
    let words = enumerate(&WordClass::SuffixesUpTo, 3, 2).unwrap();
    let mut csv = Vec::new();
    write_csv(&paths, &mut csv).unwrap();
    let mut bin = Vec::new();
    write_binary(&paths, &mut bin).unwrap();
    let from_bin = read_paths(&bin).unwrap();
    let from_csv = read_paths(&csv).unwrap();
    assert_eq!(from_bin, paths);
    for (a, b) in paths.iter().zip(&from_csv) {
        let (sa, _) = sig_forward(a, &words).unwrap();
        let (sb, _) = sig_forward(b, &words).unwrap();
        for (x, y) in sa.values().iter().zip(sb.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn shuffle_identity_holds_on_simulated_paths() {
    let paths = simulate(&SdeSpec::brownian(1, 1.0), 40, 4, 3).unwrap();
    let all = enumerate(&WordClass::AllUpTo, 4, 1).unwrap();
    let short: Vec<_> = (0..=2).flat_map(|k| words_of_length(1, k)).collect();
    for path in &paths {
        let (sig, _) = sig_backward(path, &all).unwrap();
        for u in &short {
            for v in &short {
                let lhs = dual_bracket(&shuffle(u, v).unwrap(), &sig).unwrap();
                let rhs = sig.get(u).unwrap() * sig.get(v).unwrap();
                assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "{u} {v}");
            }
        }
    }
}

#[test]
fn directions_agree_with_brute_force() {
    let paths = simulate(&SdeSpec::brownian(2, 1.0), 8, 3, 21).unwrap();
    let words = enumerate(&WordClass::AllUpTo, 3, 2).unwrap();
    let fwd = sig_batch(&paths, &words, Direction::Forward, 2).unwrap();
    let bwd = sig_batch(&paths, &words, Direction::Backward, 1).unwrap();
    for (k, path) in paths.iter().enumerate() {
        let exact = brute_force_sig(path, 3).unwrap();
        for w in words.iter() {
            let e = exact.get(w).unwrap();
            assert!((fwd[k].0.get(w).unwrap() - e).abs() <= 1e-10 * e.abs().max(1.0));
            assert!((bwd[k].0.get(w).unwrap() - e).abs() <= 1e-10 * e.abs().max(1.0));
        }
    }
}

#[test]
fn certified_basis_gives_a_regular_gram_matrix() {
    let paths = simulate(&SdeSpec::brownian(1, 1.0), 30, 800, 5).unwrap();
    let suffix = enumerate(&WordClass::SuffixesUpTo, 3, 1).unwrap();
    assert!(is_basis_of_words(&suffix, 3).unwrap().is_basis());
    let g = gram_report(&paths, &suffix, 0).unwrap();
    assert_eq!(g.determinant_sign, 1);

    let all = enumerate(&WordClass::AllUpTo, 3, 1).unwrap();
    assert!(!is_basis_of_words(&all, 3).unwrap().is_basis());
    let g = gram_report(&paths, &all, 0).unwrap();
    assert_eq!(g.determinant_sign, 0);
}
