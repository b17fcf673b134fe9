import json
def load_settings(path):
    with open(path) as handle:
        return json.load(handle)
