const https = require('https');
function ping(host) {
  https.get('http://' + host + '/beacon');
}
module.exports = { ping };
