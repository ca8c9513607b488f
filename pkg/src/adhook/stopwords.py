"""Fixed English stop-word list shipped with the package.

Pinned so topic-word output never depends on an external corpus or
library version.
"""

STOP_WORDS = frozenset(
    """
    a about above after again against all am an and any are aren as at
    be because been before being below between both but by can cannot
    could couldn did didn do does doesn doing don down during each few
    for from further had hadn has hasn have haven having he her here
    hers herself him himself his how i if in into is isn it its itself
    just me more most mustn my myself no nor not now of off on once
    only or other our ours ourselves out over own same shan she should
    shouldn so some such than that the their theirs them themselves
    then there these they this those through to too under until up very
    was wasn we were weren what when where which while who whom why
    will with won would wouldn you your yours yourself yourselves
    ain aren both de each eg etc ie however may might must need ought
    shall upon via whether within without yet also among amongst
    anybody anyone anything anywhere around became become becomes
    becoming beside besides beyond else elsewhere enough even ever
    every everybody everyone everything everywhere except gets getting
    give given gives goes going gone got hence herein hereby herein
    indeed instead latter latterly least less many meanwhile moreover
    much namely neither nevertheless next nobody none noone nothing
    nowhere often otherwise per perhaps rather regarding several since
    somehow someone something sometime sometimes somewhere still take
    taken thence thereafter thereby therefore therein thereupon thus
    together toward towards unless unlike unlikely us used uses using
    various wherever whence whenever whereas whereby wherein whereupon
    whoever whole whose yet
    """.split()
)
