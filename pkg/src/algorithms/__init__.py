from .base_target import BaseTarget
from .gmm import GaussianMixtureTarget
from .particles import DoubleWellTarget, LennardJonesTarget, zero_com_project
from .vmf import VonMisesFisherMixtureTarget
from .oracles import clip_score, langevin_reference, reference_samples, vmf_sample_oracle

TARGET_KINDS = ('gmm', 'dw4', 'lj', 'vmf')


def create_target(kind: str = 'gmm', **params) -> BaseTarget:
    """
    Factory for targets.
    Параметры с значением None отбрасываются и заменяются значениями по умолчанию.
    """
    n = (kind or '').strip().lower()
    p = {k: v for k, v in params.items() if v is not None}

    if n == 'gmm':
        if 'centers' not in p:
            return GaussianMixtureTarget.four_modes(variance=p.get('variance', 1.0))
        return GaussianMixtureTarget(p['centers'], p.get('weights'), p.get('variance', 1.0))

    if n in ('dw4', 'dw'):
        keys = ('n_particles', 'spatial_dim', 'a', 'b', 'c', 'd0', 'tau')
        return DoubleWellTarget(**{k: p[k] for k in keys if k in p})

    if n in ('lj', 'lennard_jones'):
        kw = {k: p[k] for k in ('n_particles', 'spatial_dim', 'rm', 'tau', 'eps', 'osc_c') if k in p}
        kw['standard_sign'] = bool(p.get('lj_standard_sign', False))
        return LennardJonesTarget(**kw)

    if n == 'vmf':
        if 'mus' not in p:
            return VonMisesFisherMixtureTarget.from_layout(p.get('layout', 'axes'), p.get('sphere_dim', 2),
                                                           p.get('kappas', 50.0))
        return VonMisesFisherMixtureTarget(p['mus'], p.get('kappas', 50.0), p.get('weights'))

    raise ValueError(f"Неизвестный тип цели: {kind!r}, доступны {', '.join(TARGET_KINDS)}")
