import requests
def latest_version(name):
    resp = requests.get("https://pypi.org/pypi/" + name + "/json", timeout=5)
    return resp.json()["info"]["version"]
