use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent named random stream derived from a run seed.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a over the stream name selects the ChaCha stream id
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}
