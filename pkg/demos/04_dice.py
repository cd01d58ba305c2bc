"""
A classical picture: the top and bottom of a die
================================================

Opposite faces of a die sum to seven, so seeing the top fixes the
bottom even though each face alone is uniformly random.
"""

from eprsim.experiments import opposite_face, run_dice_experiment, throw_dice

dice = throw_dice(5, seed=1)
print(dice.top, dice.bottom)
print(opposite_face([1, 6, 5]))

rep = run_dice_experiment(60_000, seed=0)
print("top frequencies", [round(f, 4) for f in rep.top_frequencies])
print("accuracy", rep.prediction_accuracy, "chi2 p", round(rep.p_value, 3))
print("H(top) bits", round(rep.entropy_top, 4), "H(bottom|top)", rep.conditional_entropy)
