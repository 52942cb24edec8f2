"""Regenerates script.json: scripted chat responses keyed by prompt hash."""
import hashlib
import json

CAPTION = "Describe the scene in this image"
QA = ("Answer the question in a maximum of two words based on the text. "
      "Consider the type of question in your answer. For example, if it is a "
      "yes/no question, the answer should be yes or no. Text: {ctx}, Question: {q}")


def key(text, image=None):
    rendered = (f"<image:{image}>\n" if image else "") + text
    return hashlib.sha256(rendered.encode()).hexdigest()


cases = [
    ("img1", "outdoors, scene", "Is it an outdoors scene?",
     "A red bus is parked on a street. The sky is clear and it is daytime.", "Yes."),
    ("img1", "color, bus", "What color is the bus?",
     "A red bus drives down a city street. Trees line the road.", "Red"),
    ("img2", "kind, vehicle, waiting, traffic, light",
     "Which kind of vehicle is waiting for the traffic light?",
     "A bus is waiting at a red traffic light. Cars are parked nearby.", "A bus"),
]

responses = {}
for image, keywords, question, caption, answer in cases:
    responses[key(f"{CAPTION}. Consider the keywords: {keywords}", image)] = caption
    responses[key(QA.format(ctx=caption, q=question))] = answer

with open("script.json", "w") as out:
    json.dump({"model": "scripted-e2e", "responses": responses,
               "fallback": "fixed:unscripted"}, out, indent=2, sort_keys=True)
    out.write("\n")
