//! Player-embedding retrieval, linear embedding maps and action profiles.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::codec::{ActionType, Block, Episode, PlayerId, ProfileGroup, Vocabulary};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Shares of the five action groups and the success rate over a set of
/// actions. `other` absorbs the rounding remainder so shares sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    pub dribble: f64,
    pub pass: f64,
    pub shot: f64,
    pub defensive: f64,
    pub other: f64,
    pub success_rate: f64,
    pub n_actions: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProfileCounter {
    counts: [u64; 5],
    successes: u64,
}

impl ProfileCounter {
    pub fn add(&mut self, t: ActionType, success: bool) {
        let slot = match t.profile_group() {
            ProfileGroup::Dribble => 0,
            ProfileGroup::Pass => 1,
            ProfileGroup::Shot => 2,
            ProfileGroup::Defensive => 3,
            ProfileGroup::Other => 4,
        };
        self.counts[slot] += 1;
        self.successes += success as u64;
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.successes += other.successes;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn profile(&self) -> Result<ActionProfile> {
        let n = self.total();
        if n == 0 {
            return Err(Error::Empty("no actions to profile".into()));
        }
        let share = |i: usize| self.counts[i] as f64 / n as f64;
        let (dribble, pass, shot, defensive) = (share(0), share(1), share(2), share(3));
        Ok(ActionProfile {
            dribble,
            pass,
            shot,
            defensive,
            other: 1.0 - (dribble + pass + shot + defensive),
            success_rate: self.successes as f64 / n as f64,
            n_actions: n,
        })
    }
}

/// Profile of everything `player` did across `episodes`.
pub fn action_profile(episodes: &[Episode], player: PlayerId) -> Result<ActionProfile> {
    let mut c = ProfileCounter::default();
    for a in episodes.iter().flat_map(|e| &e.actions).filter(|a| a.actor_id == player) {
        c.add(a.action_type, a.success);
    }
    c.profile().map_err(|_| Error::Empty(format!("player {player} has no actions in the corpus")))
}

/// Row of the shared embedding for a player token; other tokens are refused.
pub fn embedding_row<'a>(params: &'a ModelParams<f32>, vocab: &Vocabulary, token: u32) -> Result<&'a [f32]> {
    if !vocab.range(Block::Player).contains(token) {
        return Err(Error::Domain(format!("token {token} is not a player token")));
    }
    Ok(params.embedding_row(token as usize))
}

pub fn player_embedding<'a>(params: &'a ModelParams<f32>, vocab: &Vocabulary, player: PlayerId) -> Result<&'a [f32]> {
    embedding_row(params, vocab, vocab.player_token(player)?)
}

/// Cosine similarity, zero when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarPlayer {
    pub player_id: PlayerId,
    pub cosine: f64,
}

/// The `k` players whose embeddings are most cosine-similar to `player`'s,
/// excluding `player` itself. Ties go to the lower id.
pub fn similar_players(params: &ModelParams<f32>, vocab: &Vocabulary, player: PlayerId, k: usize) -> Result<Vec<SimilarPlayer>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let query = player_embedding(params, vocab, player)?;
    let mut out: Vec<SimilarPlayer> = vocab
        .player_ids()
        .iter()
        .filter(|&&p| p != player)
        .map(|&p| Ok(SimilarPlayer { player_id: p, cosine: cosine(query, player_embedding(params, vocab, p)?) }))
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then(a.player_id.cmp(&b.player_id)));
    out.truncate(k);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub player_id: PlayerId,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Covariance eigenvalues, largest first.
    pub eigenvalues: Vec<f64>,
    /// The two principal directions.
    pub axes: [Vec<f64>; 2],
}

impl Projection {
    /// Fraction of total variance carried by the two retained directions.
    pub fn explained_variance(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(2).sum::<f64>() / total
    }
}

/// Principal-component projection of `rows` onto two directions. Each
/// direction is signed so that its largest-magnitude entry is positive.
pub fn project_rows(rows: &[Vec<f64>]) -> Result<Projection> {
    if rows.len() < 3 {
        return Err(Error::InvalidArgument(format!("projection needs at least 3 points, got {}", rows.len())));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("rows must share a positive dimension".into()));
    }
    let n = rows.len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| -> Vec<f64> {
        let Some(&col) = order.get(k) else { return vec![0.0; d] };
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let mut lead = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let axes = [axis(0), axis(1)];
    let coords = (0..n)
        .map(|i| {
            let p = |a: &[f64]| (0..d).map(|j| centered[(i, j)] * a[j]).sum::<f64>();
            [p(&axes[0]), p(&axes[1])]
        })
        .collect();
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    Ok(Projection { coords, eigenvalues, axes })
}

/// Two-dimensional map of player embeddings.
pub fn project_embeddings(params: &ModelParams<f32>, vocab: &Vocabulary, players: &[PlayerId]) -> Result<Vec<ProjectedPoint>> {
    let rows = players
        .iter()
        .map(|&p| Ok(player_embedding(params, vocab, p)?.iter().map(|&x| x as f64).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let proj = project_rows(&rows)?;
    Ok(players.iter().zip(proj.coords).map(|(&player_id, [u, v])| ProjectedPoint { player_id, u, v }).collect())
}

/// Everything the service shows about one player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerCard {
    pub player_id: PlayerId,
    pub embedding: Vec<f32>,
    pub profile: Option<ActionProfile>,
    pub role_label: Option<String>,
}

/// Probability that, for a query, a same-label item is more similar than a
/// different-label item (ties count half), pooled over all queries.
pub fn same_label_auc(rows: &[Vec<f32>], labels: &[usize]) -> Result<f64> {
    if rows.len() != labels.len() {
        return Err(Error::Shape("one label per row is required".into()));
    }
    let n = rows.len();
    let sim: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| cosine(&rows[i], &rows[j])).collect()).collect();
    let (mut wins, mut pairs) = (0.0, 0.0);
    for q in 0..n {
        for a in (0..n).filter(|&a| a != q && labels[a] == labels[q]) {
            for b in (0..n).filter(|&b| labels[b] != labels[q]) {
                pairs += 1.0;
                if sim[q][a] > sim[q][b] {
                    wins += 1.0;
                } else if sim[q][a] == sim[q][b] {
                    wins += 0.5;
                }
            }
        }
    }
    if pairs == 0.0 {
        return Err(Error::Empty("no same-label/different-label pairs".into()));
    }
    Ok(wins / pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_partition_sums_to_one() {
        let mut c = ProfileCounter::default();
        for (t, s) in [(ActionType::Pass, true), (ActionType::Pass, true), (ActionType::Shot, false), (ActionType::BadTouch, true)] {
            c.add(t, s);
        }
        let p = c.profile().unwrap();
        assert_eq!(p.pass, 0.5);
        assert_eq!(p.success_rate, 0.75);
        assert!((p.dribble + p.pass + p.shot + p.defensive + p.other - 1.0).abs() < 1e-12);
        assert!(ProfileCounter::default().profile().is_err());
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let a = [1.0f32, 2.0, -0.5];
        let b = [2.0f32, 4.0, -1.0];
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&a, &[0.0; 3]), 0.0);
    }

    #[test]
    fn identical_rows_project_to_origin() {
        let rows = vec![vec![0.3, -1.0, 2.0]; 5];
        let p = project_rows(&rows).unwrap();
        assert!(p.coords.iter().all(|c| c[0] == 0.0 && c[1] == 0.0));
        assert!(project_rows(&rows[..2]).is_err());
    }

    #[test]
    fn axis_aligned_points_are_recovered() {
        let rows: Vec<Vec<f64>> = [(3.0, 0.5), (-3.0, -0.5), (1.0, -1.5), (-1.0, 1.5)].iter().map(|&(a, b)| vec![a, b]).collect();
        let p = project_rows(&rows).unwrap();
        for (r, c) in rows.iter().zip(&p.coords) {
            assert!((r[0].abs() - c[0].abs()).abs() < 1e-9 && (r[1].abs() - c[1].abs()).abs() < 1e-9);
        }
        assert!(p.axes[0][0] > 0.0 && p.axes[1][1] > 0.0);
    }

    #[test]
    fn perfect_clusters_have_unit_auc() {
        let rows = vec![vec![1.0f32, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.1, 0.9]];
        assert_eq!(same_label_auc(&rows, &[0, 0, 1, 1]).unwrap(), 1.0);
    }
}
