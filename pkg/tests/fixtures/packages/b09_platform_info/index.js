const os = require('os');
function summary() {
  return { platform: os.platform(), arch: os.arch() };
}
module.exports = { summary };
